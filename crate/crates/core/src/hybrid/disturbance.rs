//! One seeded selection of the inflated flow map `co F(z + δB) + δB`.
//!
//! A fresh pair `(e₁, e₂)` is drawn from the closed `δ`-ball once per
//! integration step and held across the RK stages; the step's flow is
//! `F(z + e₁) + e₂`. Both offsets lie in the tangent space of the flow set,
//! so the perturbed flow stays on `C`.

use crate::dynamics::OptState;
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// `e₁`, added to the state before evaluating the flow.
    pub state_offset: OptState,
    /// `e₂`, added to the flow value.
    pub flow_offset: OptState,
}

impl Perturbation {
    pub fn zero(n: usize) -> Self {
        Self {
            state_offset: OptState::zeros(n),
            flow_offset: OptState::zeros(n),
        }
    }

    /// `F(z + e₁) + e₂`
    pub fn inflate<F>(&self, z: &OptState, flow: F) -> OptState
    where
        F: Fn(&OptState) -> OptState,
    {
        let shifted = z + &self.state_offset;
        &flow(&shifted) + &self.flow_offset
    }
}

#[derive(Debug, Clone)]
pub struct Disturbance {
    radius: f64,
    rng: SimRng,
}

impl Disturbance {
    pub fn new(radius: f64, seed: u64) -> Self {
        assert!(
            radius >= 0.0 && radius.is_finite(),
            "disturbance radius must be >= 0"
        );
        Self {
            radius,
            rng: rng::seeded(seed),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Draws `(e₁, e₂)`, each uniform in the `radius`-ball of the tangent
    /// space `{(u, v) : 1ᵀu = 0, 1ᵀv = 0}`.
    pub fn draw(&mut self, n: usize) -> Perturbation {
        if self.radius == 0.0 {
            return Perturbation::zero(n);
        }
        Perturbation {
            state_offset: self.ball_sample(n),
            flow_offset: self.ball_sample(n),
        }
    }

    fn ball_sample(&mut self, n: usize) -> OptState {
        let (q, p) = rng::tangent_ball_sample(&mut self.rng, n, self.radius);
        OptState::new(q, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn zero_radius_is_nominal() {
        let mut d = Disturbance::new(0.0, 1);
        let x = OptState::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![3.0, -3.0]),
        );
        let flow = |s: &OptState| &(s * 2.0) + &OptState::zeros(2);
        let e = d.draw(2);
        assert_eq!(e.inflate(&x, flow), flow(&x));
    }

    #[test]
    fn offsets_stay_in_ball_and_tangent() {
        let mut d = Disturbance::new(0.05, 9);
        for _ in 0..500 {
            let e = d.draw(4);
            for off in [&e.state_offset, &e.flow_offset] {
                assert!(off.norm() <= 0.05 + 1e-15);
                assert!(off.q.sum().abs() < 1e-14 && off.p.sum().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn equal_seeds_coincide() {
        let mut a = Disturbance::new(0.1, 77);
        let mut b = Disturbance::new(0.1, 77);
        for _ in 0..20 {
            assert_eq!(a.draw(3), b.draw(3));
        }
    }
}
