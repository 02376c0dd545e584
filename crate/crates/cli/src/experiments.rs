//! The experiment pipelines behind the `figure*`, `omega` and
//! `validate-schedule` subcommands.

use rayon::prelude::*;
use switchopt::dynamics::Method;
use switchopt::hybrid::{
    generate_schedule, simulate, HybridArc, ScheduleError, ScheduleVerdict, SimConfig, SimError,
    SwitchEvent, SwitchSchedule, SystemKind,
};
use switchopt::integrate::integrate_mode;
use switchopt::omega::{
    perturbed_run, practical_stability_sweep, sample_omega, tail_distance, OmegaError, PointCloud,
    SweepConfig, SweepRow,
};
use switchopt::problem::SwitchedProblem;
use switchopt::rng;
use thiserror::Error;

use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Omega(#[from] OmegaError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("{0}")]
    Invalid(String),
}

/// Seed stream for schedules drawn by the figure-2 runner.
pub const SCHEDULE_STREAM: u64 = 0x5c4e;

type Summary = Vec<(String, String)>;

fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}

pub struct Figure1Result {
    pub problem: SwitchedProblem,
    pub cloud: PointCloud,
    pub arc: HybridArc,
    pub diameter: f64,
    pub tail_distance: f64,
    /// Same run with `δ` divided by ten.
    pub small_delta_tail_distance: f64,
    pub sweep: Vec<SweepRow>,
}

impl Figure1Result {
    pub fn tail_ratio(&self) -> f64 {
        self.tail_distance / self.diameter
    }

    pub fn summary(&self) -> Summary {
        let mut s = vec![
            kv("cloud_points", self.cloud.len()),
            kv("cloud_diameter", self.diameter),
            kv("cloud_resolution", self.cloud.resolution()),
            kv("lagrange_bound", self.cloud.meta().lagrange_bound),
            kv("jumps", self.arc.jump_count()),
            kv("tail_distance", self.tail_distance),
            kv("tail_over_diameter", self.tail_ratio()),
            kv(
                "tail_distance_delta_over_10",
                self.small_delta_tail_distance,
            ),
        ];
        for r in &self.sweep {
            s.push(kv(&format!("sweep_delta_{}", r.delta), r.tail_distance));
        }
        s
    }
}

pub fn run_omega(sc: &Scenario) -> Result<PointCloud, ExperimentError> {
    let problem = sc.problem()?;
    Ok(sample_omega(&problem, &sc.omega_config()?)?)
}

pub fn run_figure1(sc: &Scenario) -> Result<Figure1Result, ExperimentError> {
    let f = sc
        .figure1
        .as_ref()
        .ok_or(ScenarioError::MissingSection("figure1"))?;
    let problem = sc.problem()?;
    let method = sc.method()?;
    let cloud = sample_omega(&problem, &sc.omega_config()?)?;
    let diameter = cloud.diameter();

    let x0 = sc.initial_point(&problem);
    let run = |p: &SwitchedProblem| {
        perturbed_run(
            p,
            &x0,
            sc.seed,
            method,
            sc.horizon,
            sc.step,
            sc.record_every,
        )
    };
    let arc = run(&problem)?;
    let tail = tail_distance(&arc, &cloud, f.tail_fraction)?;
    let small = run(&problem
        .with_delta(problem.dwell().delta / 10.0)
        .map_err(OmegaError::from)?)?;
    let small_tail = tail_distance(&small, &cloud, f.tail_fraction)?;

    let sweep = practical_stability_sweep(
        &problem,
        &cloud,
        &SweepConfig {
            deltas: f.sweep_deltas.clone(),
            seeds: f.sweep_seeds,
            horizon: f.sweep_horizon,
            step: sc.step,
            tail_fraction: f.tail_fraction,
            init_radius: f.sweep_init_radius,
            method,
            base_seed: sc.seed,
            record_every: sc.record_every,
        },
    )?;

    Ok(Figure1Result {
        problem,
        cloud,
        arc,
        diameter,
        tail_distance: tail,
        small_delta_tail_distance: small_tail,
        sweep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure2Variant {
    /// Switching at the scenario's `δ`.
    Persistent,
    /// Switching at `figure2.sparse_delta`.
    Sparse,
}

/// One maximal interval of constant mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// 0-based.
    pub mode: usize,
    pub start: f64,
    pub end: f64,
    pub initial_suboptimality: f64,
    pub final_suboptimality: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

pub struct Figure2Result {
    pub problem: SwitchedProblem,
    pub arc: HybridArc,
    pub delta: f64,
    pub segments: Vec<Segment>,
    pub long_segment: f64,
    pub settle_tolerance: f64,
}

impl Figure2Result {
    /// `δ H + N₀`
    pub fn jump_bound(&self) -> f64 {
        self.delta * self.arc.last().t + self.problem.dwell().n0_f64()
    }

    pub fn long_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments
            .iter()
            .filter(|s| s.length() >= self.long_segment)
    }

    /// Every long segment ends below the settle tolerance and below where
    /// it started.
    pub fn long_segments_settle(&self) -> bool {
        self.long_segments().all(|s| {
            s.final_suboptimality <= self.settle_tolerance
                && s.final_suboptimality < s.initial_suboptimality
        })
    }

    pub fn summary(&self) -> Summary {
        let mut s = vec![
            kv("delta", self.delta),
            kv("jumps", self.arc.jump_count()),
            kv("jump_bound", self.jump_bound()),
            kv("long_segments_settle", self.long_segments_settle()),
        ];
        for (i, seg) in self.segments.iter().enumerate() {
            s.push(kv(
                &format!("segment_{}", i + 1),
                format!(
                    "mode={} t=[{}, {}] suboptimality {:.3e} -> {:.3e}",
                    seg.mode + 1,
                    seg.start,
                    seg.end,
                    seg.initial_suboptimality,
                    seg.final_suboptimality
                ),
            ));
        }
        s
    }
}

fn segments(problem: &SwitchedProblem, arc: &HybridArc) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for s in &arc.samples {
        let sigma = s.point.sigma;
        let sub = problem.suboptimality(sigma, &s.point.z.q);
        let current = out.len().checked_sub(1);
        match out.last_mut() {
            Some(seg) if seg.mode == sigma && Some(s.j) == current => {
                seg.end = s.t;
                seg.final_suboptimality = sub;
            }
            _ => out.push(Segment {
                mode: sigma,
                start: s.t,
                end: s.t,
                initial_suboptimality: sub,
                final_suboptimality: sub,
            }),
        }
    }
    out
}

pub fn run_figure2(
    sc: &Scenario,
    variant: Figure2Variant,
) -> Result<Figure2Result, ExperimentError> {
    let f = sc
        .figure2
        .as_ref()
        .ok_or(ScenarioError::MissingSection("figure2"))?;
    let base = sc.problem()?;
    let delta = match variant {
        Figure2Variant::Persistent => sc.dwell.delta,
        Figure2Variant::Sparse => f.sparse_delta,
    };
    let problem = base.with_delta(delta).map_err(OmegaError::from)?;
    let x0 = sc.initial_point(&problem);
    let sched = generate_schedule(
        rng::derive_seed(sc.seed, SCHEDULE_STREAM),
        delta,
        sc.dwell.n0,
        sc.horizon,
        problem.num_modes(),
        x0.sigma,
    )?;
    let mut cfg = SimConfig::new(
        SystemKind::Perturbed {
            tau_rate: delta,
            disturbance_seed: None,
        },
        sc.method()?,
        sc.horizon,
        sc.step,
    );
    cfg.record_every = sc.record_every;
    let arc = simulate(&problem, &x0, &sched, &cfg)?;
    let segments = segments(&problem, &arc);
    Ok(Figure2Result {
        problem,
        arc,
        delta,
        segments,
        long_segment: f.long_segment,
        settle_tolerance: f.settle_tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// `φ(q) - φ*`
    pub suboptimality: f64,
    /// `‖q - q*‖`
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub method: Method,
    pub samples: Vec<TraceSample>,
}

impl Trace {
    pub fn last(&self) -> TraceSample {
        *self.samples.last().expect("traces are nonempty")
    }

    /// Earliest recorded time after which the suboptimality stays at or
    /// below `threshold`.
    pub fn settling_time(&self, threshold: f64) -> Option<f64> {
        match self
            .samples
            .iter()
            .rposition(|s| s.suboptimality > threshold)
        {
            None => self.samples.first().map(|s| s.t),
            Some(i) => self.samples.get(i + 1).map(|s| s.t),
        }
    }
}

pub struct Figure3Result {
    pub traces: Vec<Trace>,
    pub threshold: f64,
}

impl Figure3Result {
    pub fn trace(&self, name: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.name == name)
    }

    /// HiHBM's final suboptimality is at most every baseline's.
    pub fn hihbm_no_worse(&self) -> bool {
        let Some(h) = self.trace("hihbm") else {
            return false;
        };
        self.traces
            .iter()
            .filter(|t| t.name != "hihbm")
            .all(|t| h.last().suboptimality <= t.last().suboptimality)
    }

    pub fn summary(&self) -> Summary {
        let mut s = Vec::new();
        for t in &self.traces {
            let last = t.last();
            s.push(kv(
                &format!("{}_final_suboptimality", t.name),
                last.suboptimality,
            ));
            s.push(kv(&format!("{}_final_distance", t.name), last.distance));
            s.push(kv(
                &format!("{}_settling_time", t.name),
                t.settling_time(self.threshold)
                    .map_or("none".to_string(), |v| v.to_string()),
            ));
        }
        s.push(kv("hihbm_no_worse_than_baselines", self.hihbm_no_worse()));
        s
    }
}

/// Methods compared in figure 3: gradient flow, heavy ball at each gain,
/// then the scenario's HiHBM.
pub fn figure3_methods(sc: &Scenario) -> Result<Vec<(String, Method)>, ExperimentError> {
    let f = sc
        .figure3
        .as_ref()
        .ok_or(ScenarioError::MissingSection("figure3"))?;
    let hihbm = sc.method()?;
    if !matches!(hihbm, Method::HybridHeavyBall { .. }) {
        return Err(ExperimentError::Invalid(
            "figure3 needs dynamics.method = \"hihbm\"".into(),
        ));
    }
    let mut methods = vec![("gradient".to_string(), Method::Gradient)];
    for &g in &f.gains {
        let m = Method::heavy_ball(g).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        methods.push((format!("hbm_k{g}"), m));
    }
    methods.push(("hihbm".to_string(), hihbm));
    Ok(methods)
}

pub fn run_figure3(sc: &Scenario) -> Result<Figure3Result, ExperimentError> {
    let f = sc
        .figure3
        .as_ref()
        .ok_or(ScenarioError::MissingSection("figure3"))?;
    let problem = sc.problem()?;
    let x0 = sc.initial_point(&problem);
    let sigma = x0.sigma;
    let obj = problem.flow_objective(sigma);
    let q_star = &problem.kkt(sigma).q_star;
    let every = sc.record_every;
    let methods = figure3_methods(sc)?;
    let traces = methods
        .into_par_iter()
        .map(|(name, method)| {
            let mut samples = Vec::new();
            let mut k = 0usize;
            let last = integrate_mode(
                &x0.z,
                &method,
                obj,
                problem.laplacian(),
                problem.budget(),
                sc.horizon,
                sc.step,
                |t, x| {
                    if k % every == 0 {
                        samples.push(TraceSample {
                            t,
                            suboptimality: problem.suboptimality(sigma, &x.q),
                            distance: (&x.q - q_star).norm(),
                        });
                    }
                    k += 1;
                },
            );
            let t_end = (k - 1) as f64 * sc.step;
            if samples.last().is_some_and(|s| s.t != t_end) {
                samples.push(TraceSample {
                    t: t_end,
                    suboptimality: problem.suboptimality(sigma, &last.q),
                    distance: (&last.q - q_star).norm(),
                });
            }
            Trace {
                name,
                method,
                samples,
            }
        })
        .collect();
    Ok(Figure3Result {
        traces,
        threshold: f.threshold,
    })
}

/// Parses `time mode` lines (modes 1-based, `#` comments) into a schedule.
pub fn parse_schedule(text: &str, delta: f64, n0: u32) -> Result<SwitchSchedule, ExperimentError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| ExperimentError::Invalid(format!("schedule line {}: {msg}", i + 1));
        let fields: Vec<&str> = line
            .split([' ', '\t', ','])
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            return Err(bad("expected `time mode`"));
        }
        let time: f64 = fields[0].parse().map_err(|_| bad("bad time"))?;
        let mode: usize = fields[1].parse().map_err(|_| bad("bad mode"))?;
        if mode == 0 {
            return Err(bad("modes are numbered from 1"));
        }
        events.push(SwitchEvent::new(time, mode - 1));
    }
    Ok(SwitchSchedule::new(events, delta, n0)?)
}

pub fn describe_verdict(v: &ScheduleVerdict) -> String {
    match v {
        ScheduleVerdict::Valid => "valid".to_string(),
        ScheduleVerdict::Violation {
            start,
            end,
            count,
            allowance,
        } => format!(
            "invalid: {count} switches in [{start}, {end}] exceed the allowance {allowance}"
        ),
    }
}
