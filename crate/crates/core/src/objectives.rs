//! Per-mode objectives of the switched resource-allocation problem
//!
//! ```text
//! minimize φ_σ(q) = Σ_i φ_{i,σ}(q_i)   subject to 1ᵀq = d
//! ```
//!
//! Only separable quadratics `φ(q) = ½ qᵀPq + bᵀq` with diagonal `P > 0` are
//! provided, but the dynamics consume objectives through [`SmoothObjective`],
//! which only needs values and gradients.

use nalgebra::DVector;
use rand::Rng;
use thiserror::Error;

use crate::graph::LaplacianPair;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("curvature entry {index} is {value}; all curvatures must be finite and > 0")]
    NonPositiveCurvature { index: usize, value: f64 },
    #[error("linear coefficient {index} is not finite")]
    NonFiniteLinear { index: usize },
    #[error("objective family needs at least one mode")]
    NoModes,
    #[error("invalid range [{lo}, {hi}]: {reason}")]
    BadRange {
        lo: f64,
        hi: f64,
        reason: &'static str,
    },
    #[error("resource budget must be finite, got {0}")]
    BadBudget(f64),
}

/// A C¹ convex objective with Lipschitz gradient.
pub trait SmoothObjective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, q: &DVector<f64>) -> f64;
    fn gradient(&self, q: &DVector<f64>) -> DVector<f64>;

    /// The gradient up to an additive multiple of `1`. The flows only use
    /// `L∇φ`, and `L` annihilates constants, so implementations may drop
    /// such offsets when that avoids cancellation.
    fn flow_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.gradient(q)
    }
}

/// `φ(q) = ½ qᵀ diag(curvature) q + linearᵀ q`
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticObjective {
    curvature: DVector<f64>,
    linear: DVector<f64>,
}

impl QuadraticObjective {
    pub fn new(curvature: DVector<f64>, linear: DVector<f64>) -> Result<Self, ObjectiveError> {
        if curvature.len() != linear.len() {
            return Err(ObjectiveError::Dimension {
                expected: curvature.len(),
                got: linear.len(),
            });
        }
        if curvature.is_empty() {
            return Err(ObjectiveError::Dimension {
                expected: 1,
                got: 0,
            });
        }
        for (index, &value) in curvature.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(ObjectiveError::NonPositiveCurvature { index, value });
            }
        }
        if let Some(index) = linear.iter().position(|b| !b.is_finite()) {
            return Err(ObjectiveError::NonFiniteLinear { index });
        }
        Ok(Self { curvature, linear })
    }

    pub fn from_slices(curvature: &[f64], linear: &[f64]) -> Result<Self, ObjectiveError> {
        Self::new(
            DVector::from_column_slice(curvature),
            DVector::from_column_slice(linear),
        )
    }

    /// Diagonal of `P`.
    pub fn curvature(&self) -> &DVector<f64> {
        &self.curvature
    }

    /// `b`
    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Lipschitz constant of the gradient: the largest curvature.
    pub fn lipschitz(&self) -> f64 {
        self.curvature.max()
    }

    /// `P q + b`, with the dimension checked.
    pub fn gradient_checked(&self, q: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(q)?;
        Ok(self.gradient(q))
    }

    pub fn value_checked(&self, q: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check_dim(q)?;
        Ok(self.value(q))
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<(), ObjectiveError> {
        if q.len() != self.dim() {
            return Err(ObjectiveError::Dimension {
                expected: self.dim(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Closed-form solution of the KKT system
    /// `P q + b + μ 1 = 0`, `1ᵀq = d`:
    ///
    /// ```text
    /// μ* = -(d + 1ᵀP⁻¹b) / (1ᵀP⁻¹1),   q* = -P⁻¹(b + μ* 1)
    /// ```
    pub fn kkt_solve(&self, budget: f64) -> KktSolution {
        let inv: DVector<f64> = self.curvature.map(|c| 1.0 / c);
        let mu_star = -(budget + inv.dot(&self.linear)) / inv.sum();
        let q_star = -self.linear.add_scalar(mu_star).component_mul(&inv);
        KktSolution { q_star, mu_star }
    }
}

impl SmoothObjective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.curvature.len()
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        q.iter()
            .zip(self.curvature.iter().zip(self.linear.iter()))
            .map(|(&x, (&c, &b))| 0.5 * c * x * x + b * x)
            .sum()
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        q.component_mul(&self.curvature) + &self.linear
    }
}

/// A quadratic objective paired with its feasible minimizer.
///
/// `flow_gradient` returns `P (q - q*)`, which differs from `∇φ(q)` by the
/// constant `-μ* 1`. Evaluating it this way makes `L∇φ` vanish exactly at
/// `q*` instead of leaving an `O(ε‖b‖)` residue that backward-time or
/// long-horizon integration would amplify.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredQuadratic {
    objective: QuadraticObjective,
    kkt: KktSolution,
}

impl AnchoredQuadratic {
    pub fn new(objective: QuadraticObjective, budget: f64) -> Self {
        let kkt = objective.kkt_solve(budget);
        Self { objective, kkt }
    }

    pub fn objective(&self) -> &QuadraticObjective {
        &self.objective
    }

    pub fn kkt(&self) -> &KktSolution {
        &self.kkt
    }
}

impl SmoothObjective for AnchoredQuadratic {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn value(&self, q: &DVector<f64>) -> f64 {
        self.objective.value(q)
    }

    fn gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        self.objective.gradient(q)
    }

    fn flow_gradient(&self, q: &DVector<f64>) -> DVector<f64> {
        (q - &self.kkt.q_star).component_mul(&self.objective.curvature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub q_star: DVector<f64>,
    pub mu_star: f64,
}

impl KktSolution {
    /// `(‖∇φ(q*) + μ* 1‖, |1ᵀq* - d|)`
    pub fn residuals<O: SmoothObjective + ?Sized>(&self, obj: &O, budget: f64) -> (f64, f64) {
        let stationarity = obj.gradient(&self.q_star).add_scalar(self.mu_star).norm();
        let feasibility = (self.q_star.sum() - budget).abs();
        (stationarity, feasibility)
    }

    /// `‖L ∇φ(q*)‖`, the multiplier-free form of stationarity.
    pub fn laplacian_residual<O: SmoothObjective + ?Sized>(
        &self,
        obj: &O,
        lap: &LaplacianPair,
    ) -> f64 {
        lap.apply(&obj.gradient(&self.q_star)).norm()
    }
}

/// `V(q, p) = φ(q) - φ* + ½ pᵀ L† p`
pub fn lyapunov<O: SmoothObjective + ?Sized>(
    q: &DVector<f64>,
    p: &DVector<f64>,
    obj: &O,
    lap: &LaplacianPair,
    phi_star: f64,
) -> f64 {
    obj.value(q) - phi_star + 0.5 * lap.pinv_quadratic(p)
}

/// The per-mode objectives `φ_σ, σ ∈ {1..M}` sharing one budget `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedObjectiveFamily {
    modes: Vec<QuadraticObjective>,
    budget: f64,
}

impl SwitchedObjectiveFamily {
    pub fn new(modes: Vec<QuadraticObjective>, budget: f64) -> Result<Self, ObjectiveError> {
        let first = modes.first().ok_or(ObjectiveError::NoModes)?;
        let n = first.dim();
        for m in &modes {
            if m.dim() != n {
                return Err(ObjectiveError::Dimension {
                    expected: n,
                    got: m.dim(),
                });
            }
        }
        if !budget.is_finite() {
            return Err(ObjectiveError::BadBudget(budget));
        }
        Ok(Self { modes, budget })
    }

    pub fn modes(&self) -> &[QuadraticObjective] {
        &self.modes
    }

    pub fn mode(&self, sigma: usize) -> &QuadraticObjective {
        &self.modes[sigma]
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn dim(&self) -> usize {
        self.modes[0].dim()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }
}

/// Closed interval used to parameterize random families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn check(&self) -> Result<(), ObjectiveError> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(ObjectiveError::BadRange {
                lo: self.lo,
                hi: self.hi,
                reason: "bounds must be finite",
            });
        }
        if self.lo > self.hi {
            return Err(ObjectiveError::BadRange {
                lo: self.lo,
                hi: self.hi,
                reason: "empty interval",
            });
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Default curvature distribution for the relay experiments.
pub const DEFAULT_CURVATURE: Interval = Interval::new(10.0, 20.0);
/// Default linear-coefficient distribution for the relay experiments.
pub const DEFAULT_LINEAR: Interval = Interval::new(-10.0, 10.0);

/// Draws `modes` random quadratic objectives on `n` nodes.
///
/// For each mode, the `n` curvatures are drawn first and then the `n` linear
/// coefficients, all i.i.d. uniform on their intervals.
pub fn sample_family(
    seed: u64,
    n: usize,
    modes: usize,
    curvature: Interval,
    linear: Interval,
    budget: f64,
) -> Result<SwitchedObjectiveFamily, ObjectiveError> {
    curvature.check()?;
    linear.check()?;
    if curvature.lo <= 0.0 {
        return Err(ObjectiveError::BadRange {
            lo: curvature.lo,
            hi: curvature.hi,
            reason: "curvature range must be strictly positive",
        });
    }
    if n == 0 {
        return Err(ObjectiveError::Dimension {
            expected: 1,
            got: 0,
        });
    }
    let mut rng = rng::seeded(seed);
    let objectives = (0..modes)
        .map(|_| {
            let c = DVector::from_fn(n, |_, _| curvature.sample(&mut rng));
            let b = DVector::from_fn(n, |_, _| linear.sample(&mut rng));
            QuadraticObjective::new(c, b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    SwitchedObjectiveFamily::new(objectives, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Topology;
    use approx::assert_abs_diff_eq;

    fn dv(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn gradient_examples() {
        let id = QuadraticObjective::from_slices(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert_eq!(id.gradient(&dv(&[1.0, 2.0])), dv(&[1.0, 2.0]));

        let o = QuadraticObjective::from_slices(&[10.0, 20.0], &[-10.0, 10.0]).unwrap();
        assert_eq!(o.gradient(&dv(&[0.0, 0.0])), dv(&[-10.0, 10.0]));

        let o = QuadraticObjective::from_slices(&[1.0, 2.0], &[1.0, -1.0]).unwrap();
        assert_eq!(o.gradient(&dv(&[2.0, 3.0])), dv(&[3.0, 5.0]));
    }

    #[test]
    fn gradient_dimension_mismatch() {
        let o = QuadraticObjective::from_slices(&[1.0, 2.0], &[1.0, -1.0]).unwrap();
        assert_eq!(
            o.gradient_checked(&dv(&[1.0, 2.0, 3.0])),
            Err(ObjectiveError::Dimension {
                expected: 2,
                got: 3
            })
        );
    }

    #[test]
    fn rejects_nonpositive_curvature() {
        assert!(matches!(
            QuadraticObjective::from_slices(&[1.0, 0.0], &[0.0, 0.0]),
            Err(ObjectiveError::NonPositiveCurvature { index: 1, .. })
        ));
        assert!(QuadraticObjective::from_slices(&[1.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn lipschitz_is_max_curvature() {
        let o = QuadraticObjective::from_slices(&[3.0, 7.5, 2.0], &[0.0; 3]).unwrap();
        assert_eq!(o.lipschitz(), 7.5);
    }

    #[test]
    fn kkt_equal_split() {
        let o = QuadraticObjective::from_slices(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let s = o.kkt_solve(100.0);
        assert_abs_diff_eq!(s.q_star, dv(&[50.0, 50.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(s.mu_star, -50.0, epsilon = 1e-12);
    }

    #[test]
    fn kkt_matches_direct_linear_solve() {
        // [P 1; 1ᵀ 0] [q; μ] = [-b; d] solved by LU as an independent route.
        let o = QuadraticObjective::from_slices(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        let kkt =
            nalgebra::DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 2.0, 1.0, 1.0, 1.0, 0.0]);
        let rhs = dv(&[0.0, 0.0, 3.0]);
        let direct = kkt.lu().solve(&rhs).unwrap();
        assert_abs_diff_eq!(direct, dv(&[2.0, 1.0, -2.0]), epsilon = 1e-12);

        let s = o.kkt_solve(3.0);
        assert_abs_diff_eq!(s.q_star, dv(&[2.0, 1.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(s.mu_star, -2.0, epsilon = 1e-12);
    }

    #[test]
    fn kkt_residuals_on_sampled_family() {
        let fam = sample_family(11, 20, 2, DEFAULT_CURVATURE, DEFAULT_LINEAR, 100.0).unwrap();
        let lap = LaplacianPair::build(&Topology::Path, 20).unwrap();
        for obj in fam.modes() {
            let s = obj.kkt_solve(fam.budget());
            let (stat, feas) = s.residuals(obj, fam.budget());
            assert!(stat <= 1e-9 && feas <= 1e-9, "{stat} {feas}");
            assert!(s.laplacian_residual(obj, &lap) <= 1e-8);
        }
    }

    #[test]
    fn lyapunov_examples() {
        let lap = LaplacianPair::build(&Topology::Path, 2).unwrap();
        let o = QuadraticObjective::from_slices(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let s = o.kkt_solve(100.0);
        let phi_star = o.value(&s.q_star);
        let zero = DVector::zeros(2);
        assert_abs_diff_eq!(lyapunov(&s.q_star, &zero, &o, &lap, phi_star), 0.0);

        // momentum along 1 contributes nothing
        let v_c = lyapunov(&s.q_star, &dv(&[7.0, 7.0]), &o, &lap, phi_star);
        assert_abs_diff_eq!(v_c, 0.0, epsilon = 1e-12);

        // φ(q) - φ* = ½(3600+1600) - 2500 = 100;  ½ pᵀL†p = ½·1 = 0.5·(0.25·4)
        let v = lyapunov(&dv(&[60.0, 40.0]), &dv(&[1.0, -1.0]), &o, &lap, phi_star);
        assert_abs_diff_eq!(v, 100.5, epsilon = 1e-10);
    }

    #[test]
    fn sample_family_is_deterministic_and_in_range() {
        let a = sample_family(42, 20, 2, DEFAULT_CURVATURE, DEFAULT_LINEAR, 100.0).unwrap();
        let b = sample_family(42, 20, 2, DEFAULT_CURVATURE, DEFAULT_LINEAR, 100.0).unwrap();
        assert_eq!(a, b);
        let c = sample_family(43, 20, 2, DEFAULT_CURVATURE, DEFAULT_LINEAR, 100.0).unwrap();
        assert_ne!(a, c);
        for m in a.modes() {
            assert!(m.curvature().iter().all(|&x| (10.0..=20.0).contains(&x)));
            assert!(m.linear().iter().all(|&x| (-10.0..=10.0).contains(&x)));
        }
    }

    #[test]
    fn sample_family_rejects_bad_ranges() {
        assert!(sample_family(1, 3, 2, Interval::new(0.0, 1.0), DEFAULT_LINEAR, 1.0).is_err());
        assert!(sample_family(1, 3, 2, Interval::new(-2.0, 1.0), DEFAULT_LINEAR, 1.0).is_err());
        assert!(sample_family(1, 3, 2, Interval::new(3.0, 1.0), DEFAULT_LINEAR, 1.0).is_err());
        assert!(sample_family(1, 3, 2, DEFAULT_CURVATURE, Interval::new(1.0, -1.0), 1.0).is_err());
    }
}
