//! Flow maps of the continuous-time optimization dynamics on the flow set
//! `C = {(q, p) : 1ᵀq = d, 1ᵀp = 0}`.
//!
//! * Laplacian-gradient descent: `q̇ = -L∇φ(q)`
//! * Heavy ball (HBM): `q̇ = p`, `ṗ = -K p - L∇φ(q)`
//! * Hybrid-inspired heavy ball (HiHBM): as HBM with the damping selected
//!   from `κ(x) ∈ {K̲, K̄}` by the sign of `⟨L∇φ(q), p⟩`.

use std::ops::{Add, Mul, Sub};

use nalgebra::DVector;
use thiserror::Error;

use crate::graph::LaplacianPair;
use crate::objectives::SmoothObjective;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("damping bounds must satisfy 0 < k_lo <= k_hi, got ({0}, {1})")]
    BadDamping(f64, f64),
    #[error("heavy-ball gain must be finite and > 0, got {0}")]
    BadGain(f64),
    #[error("tie band must be finite and >= 0, got {0}")]
    BadBand(f64),
}

/// Optimization state `x = (q, p)`: allocations and momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub q: DVector<f64>,
    pub p: DVector<f64>,
}

impl OptState {
    pub fn new(q: DVector<f64>, p: DVector<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have the same length");
        Self { q, p }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            p: DVector::zeros(n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            p: DVector::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// `self + h·other`
    pub fn add_scaled(&self, h: f64, other: &OptState) -> OptState {
        OptState {
            q: &self.q + &other.q * h,
            p: &self.p + &other.p * h,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.q.norm_squared() + self.p.norm_squared()).sqrt()
    }

    pub fn distance(&self, other: &OptState) -> f64 {
        let dq = (&self.q - &other.q).norm_squared();
        let dp = (&self.p - &other.p).norm_squared();
        (dq + dp).sqrt()
    }

    /// `(1ᵀq - d, 1ᵀp)`
    pub fn feasibility_residual(&self, budget: f64) -> (f64, f64) {
        (self.q.sum() - budget, self.p.sum())
    }

    /// Stacks `(q, p)` into one slice-ordered vector.
    pub fn components(&self) -> impl Iterator<Item = f64> + '_ {
        self.q.iter().chain(self.p.iter()).copied()
    }
}

impl Add for &OptState {
    type Output = OptState;
    fn add(self, rhs: &OptState) -> OptState {
        OptState {
            q: &self.q + &rhs.q,
            p: &self.p + &rhs.p,
        }
    }
}

impl Sub for &OptState {
    type Output = OptState;
    fn sub(self, rhs: &OptState) -> OptState {
        OptState {
            q: &self.q - &rhs.q,
            p: &self.p - &rhs.p,
        }
    }
}

impl Mul<f64> for &OptState {
    type Output = OptState;
    fn mul(self, rhs: f64) -> OptState {
        OptState {
            q: &self.q * rhs,
            p: &self.p * rhs,
        }
    }
}

/// `0 < K̲ <= K̄`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingBounds {
    k_lo: f64,
    k_hi: f64,
}

impl DampingBounds {
    pub fn new(k_lo: f64, k_hi: f64) -> Result<Self, DynamicsError> {
        if !(k_lo.is_finite() && k_hi.is_finite() && k_lo > 0.0 && k_lo <= k_hi) {
            return Err(DynamicsError::BadDamping(k_lo, k_hi));
        }
        Ok(Self { k_lo, k_hi })
    }

    pub fn k_lo(&self) -> f64 {
        self.k_lo
    }

    pub fn k_hi(&self) -> f64 {
        self.k_hi
    }
}

/// Selection from `[K̲, K̄]` on the switching surface `⟨L∇φ(q), p⟩ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    #[default]
    TakeHi,
    TakeLo,
    Midpoint,
}

/// Damping selection `κ` for the inner product `s = ⟨L∇φ(q), p⟩`.
pub fn kappa(s: f64, bounds: DampingBounds, tie: TieRule) -> f64 {
    kappa_banded(s, bounds, tie, 0.0)
}

/// Like [`kappa`], but treats `|s| <= band` as lying on the surface.
pub fn kappa_banded(s: f64, bounds: DampingBounds, tie: TieRule, band: f64) -> f64 {
    if s > band {
        bounds.k_hi
    } else if s < -band {
        bounds.k_lo
    } else {
        match tie {
            TieRule::TakeHi => bounds.k_hi,
            TieRule::TakeLo => bounds.k_lo,
            TieRule::Midpoint => 0.5 * (bounds.k_lo + bounds.k_hi),
        }
    }
}

/// `(q̇, ṗ) = (p, -K p - L∇φ(q))`
pub fn hbm_flow<O: SmoothObjective + ?Sized>(
    x: &OptState,
    gain: f64,
    obj: &O,
    lap: &LaplacianPair,
) -> OptState {
    let lg = lap.apply(&obj.flow_gradient(&x.q));
    OptState {
        q: x.p.clone(),
        p: -(&x.p * gain) - lg,
    }
}

/// `(q̇, ṗ) = (p, -κ(x) p - L∇φ(q))`
pub fn hihbm_flow<O: SmoothObjective + ?Sized>(
    x: &OptState,
    bounds: DampingBounds,
    tie: TieRule,
    obj: &O,
    lap: &LaplacianPair,
) -> OptState {
    hihbm_flow_banded(x, bounds, tie, 0.0, obj, lap)
}

fn hihbm_flow_banded<O: SmoothObjective + ?Sized>(
    x: &OptState,
    bounds: DampingBounds,
    tie: TieRule,
    band: f64,
    obj: &O,
    lap: &LaplacianPair,
) -> OptState {
    let lg = lap.apply(&obj.flow_gradient(&x.q));
    let k = kappa_banded(lg.dot(&x.p), bounds, tie, band);
    OptState {
        q: x.p.clone(),
        p: -(&x.p * k) - lg,
    }
}

/// `q̇ = -L∇φ(q)`
pub fn gradient_flow<O: SmoothObjective + ?Sized>(
    q: &DVector<f64>,
    obj: &O,
    lap: &LaplacianPair,
) -> DVector<f64> {
    -lap.apply(&obj.flow_gradient(q))
}

/// Orthogonal projection onto `C`:
/// `q ← q - ((1ᵀq - d)/n) 1`, `p ← p - ((1ᵀp)/n) 1`.
pub fn project_feasible(x: &OptState, budget: f64) -> OptState {
    let mut out = x.clone();
    project_feasible_mut(&mut out, budget);
    out
}

/// In-place [`project_feasible`]. A component whose sum already matches its
/// target to within the rounding error of the sum itself is left untouched,
/// so feasible points, equilibria included, are exact fixed points and the
/// projection is exactly idempotent.
pub fn project_feasible_mut(x: &mut OptState, budget: f64) {
    shift_to_sum(&mut x.q, budget);
    shift_to_sum(&mut x.p, 0.0);
}

fn shift_to_sum(v: &mut DVector<f64>, target: f64) {
    let n = v.len() as f64;
    // The first shift leaves a residual at the rounding level of the old
    // magnitudes; a second one brings it to the level of the new ones.
    for _ in 0..3 {
        let residual = v.sum() - target;
        let noise = n * f64::EPSILON * (v.amax() * n + target.abs());
        if residual.abs() <= noise {
            break;
        }
        v.add_scalar_mut(-residual / n);
    }
}

/// The optimization dynamics run on each mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Laplacian-gradient descent; the momentum component is held at zero.
    Gradient,
    HeavyBall {
        gain: f64,
    },
    HybridHeavyBall {
        bounds: DampingBounds,
        tie: TieRule,
        /// Half-width of the band around the switching surface handled by
        /// the tie rule. Zero by default.
        band: f64,
    },
}

impl Method {
    pub fn heavy_ball(gain: f64) -> Result<Self, DynamicsError> {
        if !(gain.is_finite() && gain > 0.0) {
            return Err(DynamicsError::BadGain(gain));
        }
        Ok(Method::HeavyBall { gain })
    }

    pub fn hybrid(bounds: DampingBounds) -> Self {
        Method::HybridHeavyBall {
            bounds,
            tie: TieRule::default(),
            band: 0.0,
        }
    }

    pub fn with_tie(self, tie: TieRule, band: f64) -> Result<Self, DynamicsError> {
        if !(band.is_finite() && band >= 0.0) {
            return Err(DynamicsError::BadBand(band));
        }
        Ok(match self {
            Method::HybridHeavyBall { bounds, .. } => Method::HybridHeavyBall { bounds, tie, band },
            other => other,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gradient => "gradient",
            Method::HeavyBall { .. } => "hbm",
            Method::HybridHeavyBall { .. } => "hihbm",
        }
    }

    pub fn flow<O: SmoothObjective + ?Sized>(
        &self,
        x: &OptState,
        obj: &O,
        lap: &LaplacianPair,
    ) -> OptState {
        match *self {
            Method::Gradient => OptState {
                q: gradient_flow(&x.q, obj, lap),
                p: DVector::zeros(x.dim()),
            },
            Method::HeavyBall { gain } => hbm_flow(x, gain, obj, lap),
            Method::HybridHeavyBall { bounds, tie, band } => {
                hihbm_flow_banded(x, bounds, tie, band, obj, lap)
            }
        }
    }

    /// First-order methods carry no momentum.
    pub fn uses_momentum(&self) -> bool {
        !matches!(self, Method::Gradient)
    }
}
