//! Execution of the dwell-time automaton systems on `(z, σ, τ)`.
//!
//! Flow on `C × Σ × [0, N₀]`: `z` follows mode `σ`'s dynamics, `σ` is
//! constant and `τ` grows at a rate in `[0, δ]` (perturbed system) or stays
//! put (ideal system). Jump on `C × Σ × [1, N₀]`: `z⁺ = z`,
//! `σ⁺ ∈ Σ \ {σ}`, `τ⁺ = τ - 1`.
//!
//! Solutions are pinned by an explicit [`SwitchSchedule`]. Flow is
//! integrated with fixed-step RK4 and event times are snapped to the nearest
//! grid point; the `τ` gate itself is evaluated at the exact event time.

mod disturbance;
mod schedule;

pub use disturbance::{Disturbance, Perturbation};
pub use schedule::{
    automaton_admits, generate_schedule, jump_enabled, token_level, validate_times, BlockedJump,
    ScheduleError, ScheduleVerdict, SwitchEvent, SwitchSchedule, DWELL_TOL,
};

use thiserror::Error;

use crate::dynamics::{project_feasible_mut, Method, OptState};
use crate::integrate::{rk4_step, step_count};
use crate::problem::SwitchedProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("jump not enabled: event {index} at t={time} finds tau={tau} < 1")]
    JumpNotEnabled { index: usize, time: f64, tau: f64 },
    #[error("event {index} at t={time} targets the current mode {mode}")]
    SameMode {
        index: usize,
        time: f64,
        mode: usize,
    },
    #[error("event {index} targets mode {mode}, but only {modes} modes exist")]
    UnknownMode {
        index: usize,
        mode: usize,
        modes: usize,
    },
    #[error("initial point: {0}")]
    BadInitialPoint(String),
    #[error("invalid simulation settings: {0}")]
    BadConfig(String),
}

/// Full automaton state `(z, σ, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPoint {
    pub z: OptState,
    /// 0-based mode index.
    pub sigma: usize,
    pub tau: f64,
}

impl HybridPoint {
    pub fn new(z: OptState, sigma: usize, tau: f64) -> Self {
        Self { z, sigma, tau }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcSample {
    pub t: f64,
    pub j: usize,
    pub point: HybridPoint,
}

/// A realized jump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpRecord {
    /// Grid time at which the jump was applied.
    pub t: f64,
    /// Requested (unsnapped) event time.
    pub event_time: f64,
    pub from: usize,
    pub to: usize,
    pub tau_before: f64,
}

/// A hybrid solution sampled on its hybrid time domain.
#[derive(Debug, Clone, Default)]
pub struct HybridArc {
    pub samples: Vec<ArcSample>,
    /// `[t_j, t_{j+1}]` for each jump index `j`.
    pub domain: Vec<(f64, f64)>,
    pub jumps: Vec<JumpRecord>,
}

impl HybridArc {
    pub fn jump_count(&self) -> usize {
        self.jumps.len()
    }

    pub fn last(&self) -> &ArcSample {
        self.samples
            .last()
            .expect("arcs hold at least the initial sample")
    }

    /// The switching signal realized by the arc, at the requested event
    /// times.
    pub fn switching_events(&self) -> Vec<SwitchEvent> {
        self.jumps
            .iter()
            .map(|j| SwitchEvent::new(j.event_time, j.to))
            .collect()
    }

    /// Checks the hybrid-time-domain bookkeeping: `t` and `j` nondecreasing,
    /// `j` steps by one exactly where `t` stands still, and `τ ∈ [0, n0]`.
    pub fn check_domain(&self, n0: f64) -> Result<(), String> {
        for w in self.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.t < a.t || b.j < a.j {
                return Err(format!("time went backwards at t={}", b.t));
            }
            if b.j != a.j && (b.j != a.j + 1 || b.t != a.t) {
                return Err(format!("bad jump bookkeeping at t={}", b.t));
            }
        }
        for s in &self.samples {
            if !(0.0..=n0).contains(&s.point.tau) {
                return Err(format!("tau={} left [0, {n0}] at t={}", s.point.tau, s.t));
            }
        }
        Ok(())
    }
}

/// Which automaton to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    /// `τ̇ = 0`, nominal flow.
    Ideal,
    /// `τ̇ = tau_rate ∈ [0, δ]`; when `disturbance_seed` is set, the flow is
    /// inflated by a seeded `δ`-ball selection.
    Perturbed {
        tau_rate: f64,
        disturbance_seed: Option<u64>,
    },
}

impl SystemKind {
    /// Maximal timer rate `τ̇ = δ` with a seeded disturbance.
    pub fn perturbed(problem: &SwitchedProblem, seed: u64) -> Self {
        SystemKind::Perturbed {
            tau_rate: problem.dwell().delta,
            disturbance_seed: Some(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub system: SystemKind,
    pub method: Method,
    pub horizon: f64,
    pub step: f64,
    /// Keep every k-th grid sample (jump samples and the final sample are
    /// always kept).
    pub record_every: usize,
}

impl SimConfig {
    pub fn new(system: SystemKind, method: Method, horizon: f64, step: f64) -> Self {
        Self {
            system,
            method,
            horizon,
            step,
            record_every: 1,
        }
    }
}

/// Simulates one solution from `x0` under `sched`.
pub fn simulate(
    problem: &SwitchedProblem,
    x0: &HybridPoint,
    sched: &SwitchSchedule,
    cfg: &SimConfig,
) -> Result<HybridArc, SimError> {
    let n = problem.n();
    let modes = problem.num_modes();
    let n0 = problem.dwell().n0_f64();
    let delta = problem.dwell().delta;

    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(SimError::BadConfig(format!(
            "step must be > 0, got {}",
            cfg.step
        )));
    }
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) {
        return Err(SimError::BadConfig(format!(
            "horizon must be >= 0, got {}",
            cfg.horizon
        )));
    }
    if cfg.record_every == 0 {
        return Err(SimError::BadConfig("record_every must be >= 1".into()));
    }
    let (tau_rate, disturbance_seed) = match cfg.system {
        SystemKind::Ideal => (0.0, None),
        SystemKind::Perturbed {
            tau_rate,
            disturbance_seed,
        } => {
            if !(0.0..=delta).contains(&tau_rate) {
                return Err(SimError::BadConfig(format!(
                    "timer rate {tau_rate} outside [0, {delta}]"
                )));
            }
            (tau_rate, disturbance_seed)
        }
    };
    if x0.z.dim() != n {
        return Err(SimError::BadInitialPoint(format!(
            "state has dimension {}, problem has {n}",
            x0.z.dim()
        )));
    }
    if x0.sigma >= modes {
        return Err(SimError::BadInitialPoint(format!(
            "mode {} not in 0..{modes}",
            x0.sigma
        )));
    }
    if !(0.0..=n0).contains(&x0.tau) {
        return Err(SimError::BadInitialPoint(format!(
            "tau {} not in [0, {n0}]",
            x0.tau
        )));
    }
    for (index, ev) in sched.events().iter().enumerate() {
        if ev.target >= modes {
            return Err(SimError::UnknownMode {
                index,
                mode: ev.target,
                modes,
            });
        }
    }

    let steps = step_count(cfg.horizon, cfg.step);
    let budget = problem.budget();
    let lap = problem.laplacian();
    let mut disturbance = disturbance_seed.map(|seed| Disturbance::new(delta, seed));

    let mut z = x0.z.clone();
    project_feasible_mut(&mut z, budget);
    if !cfg.method.uses_momentum() {
        z.p.fill(0.0);
    }
    let mut sigma = x0.sigma;
    let (mut tau_anchor, mut t_anchor) = (x0.tau, 0.0);
    let mut j = 0usize;
    let mut domain_start = 0.0;

    let events = sched.events();
    let mut next_event = 0usize;
    let mut arc = HybridArc::default();
    arc.samples
        .reserve(steps / cfg.record_every + 2 + events.len());

    let tau_at = |tau_anchor: f64, t_anchor: f64, t: f64| {
        token_level(tau_anchor, t_anchor, tau_rate, n0, t).clamp(0.0, n0)
    };

    for k in 0..=steps {
        let t = k as f64 * cfg.step;
        let mut tau = tau_at(tau_anchor, t_anchor, t);
        let mut recorded = false;
        if k % cfg.record_every == 0 || k == steps {
            arc.samples.push(ArcSample {
                t,
                j,
                point: HybridPoint::new(z.clone(), sigma, tau),
            });
            recorded = true;
        }

        while next_event < events.len()
            && step_count(events[next_event].time, cfg.step) == k
            && events[next_event].time <= cfg.horizon
        {
            let ev = events[next_event];
            let gate = token_level(tau_anchor, t_anchor, tau_rate, n0, ev.time);
            if !jump_enabled(gate) {
                return Err(SimError::JumpNotEnabled {
                    index: next_event,
                    time: ev.time,
                    tau: gate,
                });
            }
            if ev.target == sigma {
                return Err(SimError::SameMode {
                    index: next_event,
                    time: ev.time,
                    mode: sigma,
                });
            }
            if !recorded {
                arc.samples.push(ArcSample {
                    t,
                    j,
                    point: HybridPoint::new(z.clone(), sigma, tau),
                });
            }
            arc.jumps.push(JumpRecord {
                t,
                event_time: ev.time,
                from: sigma,
                to: ev.target,
                tau_before: gate,
            });
            arc.domain.push((domain_start, t));
            domain_start = t;
            sigma = ev.target;
            tau_anchor = (gate - 1.0).max(0.0);
            t_anchor = ev.time;
            tau = tau_anchor.clamp(0.0, n0);
            j += 1;
            arc.samples.push(ArcSample {
                t,
                j,
                point: HybridPoint::new(z.clone(), sigma, tau),
            });
            recorded = true;
            next_event += 1;
        }

        if k == steps {
            break;
        }
        let obj = problem.flow_objective(sigma);
        let flow = |s: &OptState| cfg.method.flow(s, obj, lap);
        z = match disturbance.as_mut() {
            Some(d) => {
                let e = d.draw(n);
                rk4_step(&z, cfg.step, |s| e.inflate(s, flow))
            }
            None => rk4_step(&z, cfg.step, flow),
        };
        project_feasible_mut(&mut z, budget);
        if !cfg.method.uses_momentum() {
            z.p.fill(0.0);
        }
    }
    arc.domain.push((domain_start, steps as f64 * cfg.step));
    Ok(arc)
}
