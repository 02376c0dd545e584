//! Scenario files: strict TOML describing one experiment.
//!
//! Every physics-relevant field is required. Unknown fields are rejected.
//! Mode indices in files are 1-based.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use switchopt::dynamics::{project_feasible, DampingBounds, Method, OptState, TieRule};
use switchopt::graph::{parse_edge_list, LaplacianPair, Topology};
use switchopt::hybrid::HybridPoint;
use switchopt::objectives::{sample_family, Interval, QuadraticObjective, SwitchedObjectiveFamily};
use switchopt::omega::OmegaConfig;
use switchopt::problem::{DwellTime, SwitchedProblem};
use switchopt::rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("field `{field}`: {msg}")]
    Field { field: &'static str, msg: String },
    #[error("scenario has no [{0}] section")]
    MissingSection(&'static str),
}

fn field(field: &'static str, msg: impl ToString) -> ScenarioError {
    ScenarioError::Field {
        field,
        msg: msg.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Seeds schedules, disturbances and random initial conditions.
    pub seed: u64,
    pub n: usize,
    pub budget: f64,
    pub horizon: f64,
    pub step: f64,
    /// Keep every k-th grid sample in arc outputs.
    #[serde(default = "one")]
    pub record_every: usize,
    pub topology: TopologySpec,
    pub objectives: ObjectivesSpec,
    pub dwell: DwellSpec,
    pub dynamics: DynamicsSpec,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure1: Option<Figure1Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure2: Option<Figure2Spec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure3: Option<Figure3Spec>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    Path,
    Complete,
    /// 0-based undirected edges, inline or from a file next to the scenario.
    Custom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges: Option<Vec<(usize, usize)>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        edges_file: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectivesSpec {
    /// Diagonal curvatures and linear terms drawn i.i.d. uniform.
    Sampled {
        modes: usize,
        curvature: [f64; 2],
        linear: [f64; 2],
        seed: u64,
    },
    Explicit {
        mode: Vec<ModeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub curvature: Vec<f64>,
    pub linear: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DwellSpec {
    pub delta: f64,
    pub n0: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieSpec {
    TakeHi,
    TakeLo,
    Midpoint,
}

impl From<TieSpec> for TieRule {
    fn from(t: TieSpec) -> Self {
        match t {
            TieSpec::TakeHi => TieRule::TakeHi,
            TieSpec::TakeLo => TieRule::TakeLo,
            TieSpec::Midpoint => TieRule::Midpoint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    Gradient,
    Hbm {
        gain: f64,
    },
    Hihbm {
        k_lo: f64,
        k_hi: f64,
        tie: TieSpec,
        /// Half-width of the dead band around the switching surface.
        band: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// Given `q` (and optionally `p`), projected onto the flow set.
    Explicit {
        q: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        p: Option<Vec<f64>>,
        mode: usize,
    },
    /// `q = d/n` on every node, at rest.
    EqualSplit { mode: usize },
    /// `(q*_around, 0)`
    Equilibrium { around: usize, mode: usize },
    /// `q = q*_around + radius u` for a seeded unit zero-sum direction `u`,
    /// at rest.
    Sphere {
        around: usize,
        radius: f64,
        mode: usize,
    },
}

impl InitialSpec {
    pub fn mode(&self) -> usize {
        match *self {
            InitialSpec::Explicit { mode, .. }
            | InitialSpec::EqualSplit { mode }
            | InitialSpec::Equilibrium { mode, .. }
            | InitialSpec::Sphere { mode, .. } => mode,
        }
    }
}

/// Ω-limit sampling parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    pub jump_grid: Vec<f64>,
    pub horizon: f64,
    pub jitter_radius: f64,
    pub jitter_count: usize,
    pub sample_cap: usize,
    pub thin_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure1Spec {
    pub tail_fraction: f64,
    /// Largest first.
    pub sweep_deltas: Vec<f64>,
    pub sweep_seeds: usize,
    pub sweep_horizon: f64,
    pub sweep_init_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure2Spec {
    /// Dwell-time rate of the sparse variant.
    pub sparse_delta: f64,
    /// Inter-switch segments at least this long must settle.
    pub long_segment: f64,
    /// Suboptimality a long segment must end below.
    pub settle_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Figure3Spec {
    /// Heavy-ball baseline gains.
    pub gains: Vec<f64>,
    /// Error level for the time-to-threshold summary.
    pub threshold: f64,
}

/// Overrides from the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

impl Scenario {
    /// Parses and validates scenario text. A custom topology's `edges_file`
    /// is resolved against `base_dir` and inlined.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ScenarioError> {
        let mut sc: Scenario =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        sc.resolve_edges(base_dir)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, path.parent())
    }

    fn resolve_edges(&mut self, base_dir: Option<&Path>) -> Result<(), ScenarioError> {
        if let TopologySpec::Custom { edges, edges_file } = &mut self.topology {
            match (edges.is_some(), edges_file.take()) {
                (true, Some(_)) => {
                    return Err(field(
                        "topology",
                        "give either edges or edges_file, not both",
                    ))
                }
                (false, None) => return Err(field("topology", "custom topology needs edges")),
                (false, Some(file)) => {
                    let path = base_dir.map_or_else(|| file.clone().into(), |d| d.join(&file));
                    let text =
                        std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io {
                            path: path.display().to_string(),
                            source,
                        })?;
                    *edges =
                        Some(parse_edge_list(&text).map_err(|e| field("topology.edges_file", e))?);
                }
                (true, None) => {}
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: Overrides) -> Result<(), ScenarioError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(step) = o.step {
            self.step = step;
        }
        if let Some(horizon) = o.horizon {
            self.horizon = horizon;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 2 {
            return Err(field("n", "need at least 2 nodes"));
        }
        positive("horizon", self.horizon)?;
        positive("step", self.step)?;
        if self.step > self.horizon {
            return Err(field("step", "step exceeds horizon"));
        }
        if !self.budget.is_finite() {
            return Err(field("budget", "must be finite"));
        }
        if self.record_every == 0 {
            return Err(field("record_every", "must be >= 1"));
        }
        if !(self.dwell.delta.is_finite() && self.dwell.delta >= 0.0) {
            return Err(field("dwell.delta", "must be finite and >= 0"));
        }
        if self.dwell.n0 == 0 {
            return Err(field("dwell.n0", "must be >= 1"));
        }
        self.method()?;
        self.family()?;
        let modes = self.num_modes();
        let check_mode = |name: &'static str, m: usize| {
            if m == 0 || m > modes {
                Err(field(name, format!("mode {m} not in 1..={modes}")))
            } else {
                Ok(())
            }
        };
        check_mode("initial.mode", self.initial.mode())?;
        match &self.initial {
            InitialSpec::Explicit { q, p, .. } => {
                if q.len() != self.n {
                    return Err(field("initial.q", format!("expected {} entries", self.n)));
                }
                if p.as_ref().is_some_and(|p| p.len() != self.n) {
                    return Err(field("initial.p", format!("expected {} entries", self.n)));
                }
            }
            InitialSpec::Equilibrium { around, .. } => check_mode("initial.around", *around)?,
            InitialSpec::Sphere { around, radius, .. } => {
                check_mode("initial.around", *around)?;
                nonnegative("initial.radius", *radius)?;
            }
            InitialSpec::EqualSplit { .. } => {}
        }
        if let Some(o) = &self.omega {
            positive("omega.horizon", o.horizon)?;
            nonnegative("omega.jitter_radius", o.jitter_radius)?;
            nonnegative("omega.thin_fraction", o.thin_fraction)?;
            if o.jump_grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(field("omega.jump_grid", "times must be finite and >= 0"));
            }
        }
        if let Some(f) = &self.figure1 {
            fraction("figure1.tail_fraction", f.tail_fraction)?;
            positive("figure1.sweep_horizon", f.sweep_horizon)?;
            nonnegative("figure1.sweep_init_radius", f.sweep_init_radius)?;
            if f.sweep_seeds == 0 {
                return Err(field("figure1.sweep_seeds", "must be >= 1"));
            }
            if f.sweep_deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return Err(field("figure1.sweep_deltas", "must be finite and >= 0"));
            }
            if f.sweep_deltas.windows(2).any(|w| w[1] >= w[0]) {
                return Err(field("figure1.sweep_deltas", "must be strictly decreasing"));
            }
        }
        if let Some(f) = &self.figure2 {
            nonnegative("figure2.sparse_delta", f.sparse_delta)?;
            positive("figure2.long_segment", f.long_segment)?;
            positive("figure2.settle_tolerance", f.settle_tolerance)?;
        }
        if let Some(f) = &self.figure3 {
            if f.gains.is_empty() || f.gains.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
                return Err(field("figure3.gains", "need one or more positive gains"));
            }
            positive("figure3.threshold", f.threshold)?;
        }
        Ok(())
    }

    pub fn num_modes(&self) -> usize {
        match &self.objectives {
            ObjectivesSpec::Sampled { modes, .. } => *modes,
            ObjectivesSpec::Explicit { mode } => mode.len(),
        }
    }

    pub fn topology(&self) -> Topology {
        match &self.topology {
            TopologySpec::Path => Topology::Path,
            TopologySpec::Complete => Topology::Complete,
            TopologySpec::Custom { edges, .. } => {
                Topology::Custom(edges.clone().unwrap_or_default())
            }
        }
    }

    pub fn method(&self) -> Result<Method, ScenarioError> {
        match self.dynamics {
            DynamicsSpec::Gradient => Ok(Method::Gradient),
            DynamicsSpec::Hbm { gain } => {
                Method::heavy_ball(gain).map_err(|e| field("dynamics.gain", e))
            }
            DynamicsSpec::Hihbm {
                k_lo,
                k_hi,
                tie,
                band,
            } => {
                let bounds =
                    DampingBounds::new(k_lo, k_hi).map_err(|e| field("dynamics.k_lo", e))?;
                Method::hybrid(bounds)
                    .with_tie(tie.into(), band)
                    .map_err(|e| field("dynamics.band", e))
            }
        }
    }

    pub fn family(&self) -> Result<SwitchedObjectiveFamily, ScenarioError> {
        match &self.objectives {
            ObjectivesSpec::Sampled {
                modes,
                curvature,
                linear,
                seed,
            } => {
                if *modes == 0 {
                    return Err(field("objectives.modes", "must be >= 1"));
                }
                sample_family(
                    *seed,
                    self.n,
                    *modes,
                    Interval::new(curvature[0], curvature[1]),
                    Interval::new(linear[0], linear[1]),
                    self.budget,
                )
                .map_err(|e| field("objectives", e))
            }
            ObjectivesSpec::Explicit { mode } => {
                let modes = mode
                    .iter()
                    .map(|m| {
                        if m.curvature.len() != self.n || m.linear.len() != self.n {
                            return Err(field(
                                "objectives.mode",
                                format!("each mode needs {} curvature and linear entries", self.n),
                            ));
                        }
                        QuadraticObjective::from_slices(&m.curvature, &m.linear)
                            .map_err(|e| field("objectives.mode", e))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                SwitchedObjectiveFamily::new(modes, self.budget).map_err(|e| field("objectives", e))
            }
        }
    }

    pub fn problem(&self) -> Result<SwitchedProblem, ScenarioError> {
        let lap =
            LaplacianPair::build(&self.topology(), self.n).map_err(|e| field("topology", e))?;
        let dwell =
            DwellTime::new(self.dwell.delta, self.dwell.n0).map_err(|e| field("dwell", e))?;
        SwitchedProblem::new(lap, self.family()?, dwell).map_err(|e| field("n", e))
    }

    /// The initial hybrid point, projected onto the flow set, with a full
    /// token budget. Returned modes are 0-based.
    pub fn initial_point(&self, problem: &SwitchedProblem) -> HybridPoint {
        let n0 = problem.dwell().n0_f64();
        let (z, mode) = match &self.initial {
            InitialSpec::Explicit { q, p, mode } => {
                let p = p.clone().unwrap_or_else(|| vec![0.0; self.n]);
                (
                    OptState::new(DVector::from_vec(q.clone()), DVector::from_vec(p)),
                    *mode,
                )
            }
            InitialSpec::EqualSplit { mode } => (
                OptState::at_rest(DVector::from_element(self.n, self.budget / self.n as f64)),
                *mode,
            ),
            InitialSpec::Equilibrium { around, mode } => (problem.equilibrium(around - 1), *mode),
            InitialSpec::Sphere {
                around,
                radius,
                mode,
            } => {
                let mut r = rng::seeded(rng::derive_seed(self.seed, INITIAL_STREAM));
                let u = rng::zero_sum_direction(&mut r, self.n);
                let q = &problem.kkt(around - 1).q_star + u * *radius;
                (OptState::at_rest(q), *mode)
            }
        };
        HybridPoint::new(project_feasible(&z, self.budget), mode - 1, n0)
    }

    pub fn omega_config(&self) -> Result<OmegaConfig, ScenarioError> {
        let o = self
            .omega
            .as_ref()
            .ok_or(ScenarioError::MissingSection("omega"))?;
        let mut cfg = OmegaConfig::new(
            self.method()?,
            self.dwell.n0,
            o.jump_grid.clone(),
            o.horizon,
            self.step,
        );
        cfg.jitter_radius = o.jitter_radius;
        cfg.jitter_count = o.jitter_count;
        cfg.sample_cap = o.sample_cap;
        cfg.thin_fraction = o.thin_fraction;
        cfg.seed = self.seed;
        Ok(cfg)
    }

    /// Canonical TOML of the effective scenario.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// SHA-256 of [`Scenario::canonical`], hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Seed stream for random initial conditions.
pub const INITIAL_STREAM: u64 = 0x1a17;

fn positive(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be finite and > 0, got {v}")))
    }
}

fn nonnegative(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(field(name, format!("must be finite and >= 0, got {v}")))
    }
}

fn fraction(name: &'static str, v: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(field(name, format!("must lie in [0, 1], got {v}")))
    }
}

/// Built-in scenarios, selectable by name.
pub const BUILTIN: &[(&str, &str)] = &[
    ("figure1", include_str!("../scenarios/figure1.toml")),
    ("figure2", include_str!("../scenarios/figure2.toml")),
    ("figure3", include_str!("../scenarios/figure3.toml")),
];

pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| Scenario::from_toml_str(text, None).expect("built-in scenario is valid"))
}
