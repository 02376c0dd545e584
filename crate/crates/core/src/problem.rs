//! The switched allocation problem: one relay graph, `M` objective modes
//! sharing a budget, and the average dwell-time parameters `(δ, N₀)`.
//!
//! Modes are indexed from 0 in the API; file formats print them from 1.

use thiserror::Error;

use crate::dynamics::OptState;
use crate::graph::LaplacianPair;
use crate::objectives::{
    AnchoredQuadratic, KktSolution, QuadraticObjective, SmoothObjective, SwitchedObjectiveFamily,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("graph has {graph} nodes but objectives have dimension {objectives}")]
    DimensionMismatch { graph: usize, objectives: usize },
    #[error("dwell-time rate delta must be finite and >= 0, got {0}")]
    BadDelta(f64),
    #[error("dwell-time budget n0 must be >= 1")]
    BadN0,
}

/// Average dwell-time constraint `N(s, t) <= δ (t - s) + N₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellTime {
    pub delta: f64,
    pub n0: u32,
}

impl DwellTime {
    pub fn new(delta: f64, n0: u32) -> Result<Self, ProblemError> {
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(ProblemError::BadDelta(delta));
        }
        if n0 == 0 {
            return Err(ProblemError::BadN0);
        }
        Ok(Self { delta, n0 })
    }

    pub fn n0_f64(&self) -> f64 {
        f64::from(self.n0)
    }
}

#[derive(Debug, Clone)]
pub struct SwitchedProblem {
    laplacian: LaplacianPair,
    family: SwitchedObjectiveFamily,
    anchored: Vec<AnchoredQuadratic>,
    phi_star: Vec<f64>,
    dwell: DwellTime,
}

impl SwitchedProblem {
    pub fn new(
        laplacian: LaplacianPair,
        family: SwitchedObjectiveFamily,
        dwell: DwellTime,
    ) -> Result<Self, ProblemError> {
        if laplacian.n() != family.dim() {
            return Err(ProblemError::DimensionMismatch {
                graph: laplacian.n(),
                objectives: family.dim(),
            });
        }
        let anchored: Vec<AnchoredQuadratic> = family
            .modes()
            .iter()
            .map(|m| AnchoredQuadratic::new(m.clone(), family.budget()))
            .collect();
        let phi_star = anchored.iter().map(|a| a.value(&a.kkt().q_star)).collect();
        Ok(Self {
            laplacian,
            family,
            anchored,
            phi_star,
            dwell,
        })
    }

    pub fn laplacian(&self) -> &LaplacianPair {
        &self.laplacian
    }

    pub fn family(&self) -> &SwitchedObjectiveFamily {
        &self.family
    }

    pub fn objective(&self, sigma: usize) -> &QuadraticObjective {
        self.family.mode(sigma)
    }

    /// Mode `σ` in the form the flows evaluate.
    pub fn flow_objective(&self, sigma: usize) -> &AnchoredQuadratic {
        &self.anchored[sigma]
    }

    pub fn num_modes(&self) -> usize {
        self.family.num_modes()
    }

    pub fn n(&self) -> usize {
        self.family.dim()
    }

    pub fn budget(&self) -> f64 {
        self.family.budget()
    }

    pub fn dwell(&self) -> DwellTime {
        self.dwell
    }

    /// Same problem with a different dwell-time rate.
    pub fn with_delta(&self, delta: f64) -> Result<Self, ProblemError> {
        let mut out = self.clone();
        out.dwell = DwellTime::new(delta, self.dwell.n0)?;
        Ok(out)
    }

    /// Same problem under different dwell-time parameters.
    pub fn with_dwell(&self, dwell: DwellTime) -> Self {
        let mut out = self.clone();
        out.dwell = dwell;
        out
    }

    pub fn kkt(&self, sigma: usize) -> &KktSolution {
        self.anchored[sigma].kkt()
    }

    /// Cached feasible minimum `φ*_σ`.
    pub fn phi_star(&self, sigma: usize) -> f64 {
        self.phi_star[sigma]
    }

    /// `z*_σ = (q*_σ, 0)`
    pub fn equilibrium(&self, sigma: usize) -> OptState {
        OptState::at_rest(self.kkt(sigma).q_star.clone())
    }

    /// `V_σ(q, p)`
    pub fn lyapunov(&self, sigma: usize, x: &OptState) -> f64 {
        crate::objectives::lyapunov(
            &x.q,
            &x.p,
            self.objective(sigma),
            &self.laplacian,
            self.phi_star[sigma],
        )
    }

    /// `φ_σ(q) - φ*_σ`
    pub fn suboptimality(&self, sigma: usize, q: &nalgebra::DVector<f64>) -> f64 {
        self.objective(sigma).value(q) - self.phi_star[sigma]
    }
}
