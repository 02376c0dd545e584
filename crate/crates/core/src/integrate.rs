//! Fixed-step explicit RK4 on [`OptState`].
//!
//! The HiHBM right-hand side is discontinuous across its switching surface,
//! so each stage evaluates the damping selection at its own stage state.

use crate::dynamics::{project_feasible_mut, Method, OptState};
use crate::graph::LaplacianPair;
use crate::objectives::{lyapunov, QuadraticObjective, SmoothObjective};

pub const DEFAULT_STEP: f64 = 1e-3;

/// One classical RK4 step of `ẋ = f(x)`.
pub fn rk4_step<F>(x: &OptState, h: f64, f: F) -> OptState
where
    F: Fn(&OptState) -> OptState,
{
    let k1 = f(x);
    let k2 = f(&x.add_scaled(0.5 * h, &k1));
    let k3 = f(&x.add_scaled(0.5 * h, &k2));
    let k4 = f(&x.add_scaled(h, &k3));
    let mut out = x.clone();
    let w = h / 6.0;
    out.q += (&k1.q + &k2.q * 2.0 + &k3.q * 2.0 + &k4.q) * w;
    out.p += (&k1.p + &k2.p * 2.0 + &k3.p * 2.0 + &k4.p) * w;
    out
}

/// Number of fixed steps covering `horizon`.
pub fn step_count(horizon: f64, step: f64) -> usize {
    (horizon / step).round().max(0.0) as usize
}

/// A single-mode trajectory sample.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub t: f64,
    pub state: OptState,
}

/// Integrates one mode's dynamics from `x0` over `[0, horizon]`, projecting
/// onto the flow set after every step. `observe` sees every grid point,
/// including `t = 0`.
pub fn integrate_mode<O, F>(
    x0: &OptState,
    method: &Method,
    obj: &O,
    lap: &LaplacianPair,
    budget: f64,
    horizon: f64,
    step: f64,
    mut observe: F,
) -> OptState
where
    O: SmoothObjective + ?Sized,
    F: FnMut(f64, &OptState),
{
    let steps = step_count(horizon, step);
    let mut x = x0.clone();
    if !method.uses_momentum() {
        x.p.fill(0.0);
    }
    observe(0.0, &x);
    for k in 0..steps {
        x = rk4_step(&x, step, |s| method.flow(s, obj, lap));
        project_feasible_mut(&mut x, budget);
        observe((k + 1) as f64 * step, &x);
    }
    x
}

/// Integrates `ẋ = -F(x)` (reversed time) from `x0` over `[0, horizon]`
/// and returns the largest deviation from `x0` seen on the grid.
pub fn backward_deviation<O: SmoothObjective + ?Sized>(
    x0: &OptState,
    method: &Method,
    obj: &O,
    lap: &LaplacianPair,
    budget: f64,
    horizon: f64,
    step: f64,
) -> f64 {
    let steps = step_count(horizon, step);
    let mut x = x0.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        x = rk4_step(&x, step, |s| &method.flow(s, obj, lap) * -1.0);
        project_feasible_mut(&mut x, budget);
        worst = worst.max(x.distance(x0));
        if !worst.is_finite() {
            return f64::INFINITY;
        }
    }
    worst
}

/// Lyapunov values `V(x(t_k))` along a single-mode HiHBM/HBM run, for a
/// quadratic mode with its feasible minimum `phi_star`.
pub fn lyapunov_trace(
    x0: &OptState,
    method: &Method,
    obj: &QuadraticObjective,
    lap: &LaplacianPair,
    budget: f64,
    phi_star: f64,
    horizon: f64,
    step: f64,
) -> Vec<f64> {
    let mut values = Vec::with_capacity(step_count(horizon, step) + 1);
    integrate_mode(x0, method, obj, lap, budget, horizon, step, |_, x| {
        values.push(lyapunov(&x.q, &x.p, obj, lap, phi_star));
    });
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn rk4_matches_exponential() {
        // q̇ = p, ṗ = -p on one node: p(t) = e^{-t}, q(t) = 1 - e^{-t}
        let x0 = OptState::new(DVector::from_element(1, 0.0), DVector::from_element(1, 1.0));
        let mut x = x0;
        for _ in 0..100 {
            x = rk4_step(&x, 0.01, |s| OptState {
                q: s.p.clone(),
                p: -&s.p,
            });
        }
        let e = (-1.0f64).exp();
        assert!((x.p[0] - e).abs() < 1e-10);
        assert!((x.q[0] - (1.0 - e)).abs() < 1e-10);
    }

    #[test]
    fn step_count_rounds() {
        assert_eq!(step_count(1.0, 1e-3), 1000);
        assert_eq!(step_count(0.3, 0.1), 3);
        assert_eq!(step_count(0.0, 0.1), 0);
    }
}
