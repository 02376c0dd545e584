//! Continuous-time heavy-ball optimization under persistently switching
//! objectives.
//!
//! The crate simulates Laplacian-gradient flows (plain gradient, heavy ball
//! and the hybrid-inspired heavy ball differential inclusion) for the
//! resource-allocation problem `min φ_σ(q) s.t. 1ᵀq = d`, switches the
//! objective `σ` under an average dwell-time automaton, and approximates the
//! Ω-limit set of the unperturbed switched system by sampling its reachable
//! set.

pub mod dynamics;
pub mod graph;
pub mod hybrid;
pub mod integrate;
pub mod objectives;
pub mod omega;
pub mod problem;
pub mod rng;

pub use dynamics::{DampingBounds, Method, OptState, TieRule};
pub use graph::{LaplacianPair, Topology};
pub use hybrid::{simulate, HybridArc, HybridPoint, SimConfig, SwitchSchedule, SystemKind};
pub use objectives::{
    AnchoredQuadratic, QuadraticObjective, SmoothObjective, SwitchedObjectiveFamily,
};
pub use omega::PointCloud;
pub use problem::{DwellTime, SwitchedProblem};
