//! Sampled approximation of the Ω-limit set of the unperturbed switched
//! system, distance queries against it, and the practical-stability sweep
//! over the dwell-time rate `δ`.
//!
//! The set is approximated by the reachable set of the ideal system (timer
//! frozen at `N₀`, so at most `N₀` jumps) started at each mode's
//! equilibrium `(q*_σ, 0)`. Jumps are placed on a finite grid of candidate
//! times and the resulting trajectories are pooled into a [`PointCloud`].

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{Method, OptState};
use crate::hybrid::{
    generate_schedule, simulate, HybridArc, HybridPoint, ScheduleError, SimConfig, SimError,
    SwitchEvent, SwitchSchedule, SystemKind,
};
use crate::problem::{DwellTime, ProblemError, SwitchedProblem};
use crate::rng;

/// Mode sequences are enumerated exhaustively up to this many.
pub const EXHAUSTIVE_MODE_SEQUENCES: usize = 64;
/// Jump-time subsets are enumerated exhaustively up to this many.
pub const EXHAUSTIVE_TIME_SUBSETS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OmegaError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("dimension mismatch: cloud has n={cloud}, query has n={query}")]
    Dimension { cloud: usize, query: usize },
    #[error("invalid omega configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// A state tagged with the mode active when it was recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudPoint {
    pub sigma: usize,
    pub state: OptState,
}

/// Generating parameters of a cloud.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CloudMeta {
    pub modes: usize,
    pub n0: u32,
    pub jump_grid: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub runs: usize,
    pub exhaustive: bool,
    /// Edge length of the thinning grid; 0 means unthinned.
    pub cell_size: f64,
    /// Largest `‖z‖` seen over all generating runs, before thinning.
    pub lagrange_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<CloudPoint>,
    meta: CloudMeta,
}

impl PointCloud {
    /// A cloud from explicit points, with empty metadata.
    pub fn from_points(points: Vec<CloudPoint>) -> Self {
        let lagrange_bound = points.iter().map(|p| p.state.norm()).fold(0.0, f64::max);
        Self {
            points,
            meta: CloudMeta {
                lagrange_bound,
                ..CloudMeta::default()
            },
        }
    }

    pub fn points(&self) -> &[CloudPoint] {
        &self.points
    }

    pub fn meta(&self) -> &CloudMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Minimum Euclidean distance from `x` to a cloud point, over `z` only.
    pub fn distance(&self, x: &OptState) -> Result<f64, OmegaError> {
        distance_to_cloud(x, self)
    }

    /// Largest pairwise distance between cloud points.
    pub fn diameter(&self) -> f64 {
        let pts = &self.points;
        (0..pts.len())
            .into_par_iter()
            .map(|i| {
                pts[i + 1..]
                    .iter()
                    .map(|b| squared_distance(&pts[i].state, &b.state))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// Worst-case distance from a generating sample to its retained
    /// representative: the diagonal of one thinning cell.
    pub fn resolution(&self) -> f64 {
        let n = self.points.first().map_or(0, |p| p.state.dim());
        self.meta.cell_size * ((2 * n) as f64).sqrt()
    }
}

fn squared_distance(a: &OptState, b: &OptState) -> f64 {
    let dq: f64 =
        a.q.iter()
            .zip(b.q.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
    let dp: f64 =
        a.p.iter()
            .zip(b.p.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
    dq + dp
}

/// Brute-force nearest-point distance; `σ` and `τ` are ignored.
pub fn distance_to_cloud(x: &OptState, cloud: &PointCloud) -> Result<f64, OmegaError> {
    let first = cloud.points.first().ok_or(OmegaError::EmptyCloud)?;
    if first.state.dim() != x.dim() {
        return Err(OmegaError::Dimension {
            cloud: first.state.dim(),
            query: x.dim(),
        });
    }
    let best = cloud
        .points
        .iter()
        .map(|p| squared_distance(x, &p.state))
        .fold(f64::INFINITY, f64::min);
    Ok(best.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmegaConfig {
    pub method: Method,
    pub n0: u32,
    /// Candidate jump times; entries outside `[0, horizon)` are ignored.
    pub jump_grid: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    /// Radius of the tangent ball around each equilibrium used to probe the
    /// closure of the reachable set.
    pub jitter_radius: f64,
    /// Jittered starts per jump assignment.
    pub jitter_count: usize,
    /// Number of sampled jump assignments when enumeration is too large.
    pub sample_cap: usize,
    /// Thinning cell size as a fraction of the equilibrium-set diameter;
    /// 0 disables thinning.
    pub thin_fraction: f64,
    pub seed: u64,
}

impl OmegaConfig {
    pub fn new(method: Method, n0: u32, jump_grid: Vec<f64>, horizon: f64, step: f64) -> Self {
        Self {
            method,
            n0,
            jump_grid,
            horizon,
            step,
            jitter_radius: 1e-4,
            jitter_count: 8,
            sample_cap: 256,
            thin_fraction: 1e-2,
            seed: 0,
        }
    }
}

/// One jump assignment: start mode, jump times and post-jump modes.
#[derive(Debug, Clone, PartialEq)]
struct RunSpec {
    start: usize,
    times: Vec<f64>,
    targets: Vec<usize>,
}

impl RunSpec {
    /// Seed depending only on the assignment itself, so a run draws the same
    /// jitter whatever else is enumerated alongside it.
    fn seed(&self, base: u64) -> u64 {
        let mut s = rng::derive_seed(base, self.start as u64);
        for (t, m) in self.times.iter().zip(&self.targets) {
            s = rng::derive_seed(s, t.to_bits());
            s = rng::derive_seed(s, *m as u64);
        }
        s
    }
}

fn combinations(len: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            cur.push(i);
            rec(i + 1, len, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, k, &mut Vec::new(), &mut out);
    out
}

/// All target sequences of length `k` that never repeat the current mode.
fn mode_sequences(start: usize, modes: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for seq in &out {
            let current = seq.last().copied().unwrap_or(start);
            for m in (0..modes).filter(|&m| m != current) {
                let mut s = seq.clone();
                s.push(m);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn plan_runs(modes: usize, grid: &[f64], cfg: &OmegaConfig) -> (Vec<RunSpec>, bool) {
    let max_jumps = (cfg.n0 as usize).min(grid.len());
    if modes < 2 || max_jumps == 0 {
        return (Vec::new(), true);
    }
    let seq_count = modes.checked_pow(cfg.n0).unwrap_or(usize::MAX);
    let subset_count: usize = (1..=max_jumps).map(|k| binomial(grid.len(), k)).sum();
    if seq_count <= EXHAUSTIVE_MODE_SEQUENCES && subset_count <= EXHAUSTIVE_TIME_SUBSETS {
        let mut runs = Vec::new();
        for start in 0..modes {
            for k in 1..=max_jumps {
                for subset in combinations(grid.len(), k) {
                    let times: Vec<f64> = subset.iter().map(|&i| grid[i]).collect();
                    for targets in mode_sequences(start, modes, k) {
                        runs.push(RunSpec {
                            start,
                            times: times.clone(),
                            targets,
                        });
                    }
                }
            }
        }
        return (runs, true);
    }

    let mut rng = rng::seeded(rng::derive_seed(cfg.seed, 0x0e9a));
    let runs = (0..cfg.sample_cap)
        .map(|_| {
            let start = rng.random_range(0..modes);
            let k = rng.random_range(1..=max_jumps);
            let mut picked = index::sample(&mut rng, grid.len(), k).into_vec();
            picked.sort_unstable();
            let mut current = start;
            let targets = (0..k)
                .map(|_| {
                    let mut m = rng.random_range(0..modes - 1);
                    if m >= current {
                        m += 1;
                    }
                    current = m;
                    m
                })
                .collect();
            RunSpec {
                start,
                times: picked.iter().map(|&i| grid[i]).collect(),
                targets,
            }
        })
        .collect();
    (runs, false)
}

type CellKey = (usize, Vec<i64>);

fn cell_key(point: &CloudPoint, cell: f64) -> CellKey {
    let coords = point
        .state
        .components()
        .map(|c| {
            if cell > 0.0 {
                (c / cell).floor() as i64
            } else {
                c.to_bits() as i64
            }
        })
        .collect();
    (point.sigma, coords)
}

struct RunOutput {
    points: Vec<(CellKey, CloudPoint)>,
    max_norm: f64,
}

fn arc_points(arc: &HybridArc, post_jump_only: bool) -> impl Iterator<Item = CloudPoint> + '_ {
    arc.samples
        .iter()
        .filter(move |s| !post_jump_only || s.j >= 1)
        .map(|s| CloudPoint {
            sigma: s.point.sigma,
            state: s.point.z.clone(),
        })
}

fn execute_run(
    problem: &SwitchedProblem,
    spec: &RunSpec,
    cfg: &OmegaConfig,
    cell: f64,
) -> Result<RunOutput, OmegaError> {
    let n = problem.n();
    let n0 = f64::from(cfg.n0);
    let events = spec
        .times
        .iter()
        .zip(&spec.targets)
        .map(|(&t, &m)| SwitchEvent::new(t, m))
        .collect();
    let sched = SwitchSchedule::new(events, 0.0, cfg.n0)?;
    let sim = SimConfig::new(SystemKind::Ideal, cfg.method, cfg.horizon, cfg.step);
    let z_star = problem.equilibrium(spec.start);
    let mut jitter_rng = rng::seeded(spec.seed(cfg.seed));

    let mut seen = HashSet::new();
    let mut out = RunOutput {
        points: Vec::new(),
        max_norm: 0.0,
    };
    for attempt in 0..=cfg.jitter_count {
        let (z0, post_jump_only) = if attempt == 0 {
            (z_star.clone(), false)
        } else {
            let (dq, dp) = rng::tangent_ball_sample(&mut jitter_rng, n, cfg.jitter_radius);
            (OptState::new(&z_star.q + dq, &z_star.p + dp), true)
        };
        let x0 = HybridPoint::new(z0, spec.start, n0);
        let arc = simulate(problem, &x0, &sched, &sim)?;
        for point in arc_points(&arc, post_jump_only) {
            out.max_norm = out.max_norm.max(point.state.norm());
            let key = cell_key(&point, cell);
            if seen.insert(key.clone()) {
                out.points.push((key, point));
            }
        }
    }
    Ok(out)
}

/// Samples the reachable set of the ideal system from every equilibrium.
///
/// For each start mode and each assignment of up to `n0` jump times from
/// the grid with target sequences over the other modes, the ideal system is
/// simulated from `((q*_σ, 0), σ, n0)` and from `jitter_count` starts in the
/// `jitter_radius` ball around it; jittered runs only contribute their
/// post-jump samples. Each equilibrium is always included exactly.
///
/// Samples are thinned on a grid of cell size `thin_fraction` times the
/// diameter of the equilibrium set, keeping the first sample per cell in a
/// fixed enumeration order, so the result does not depend on scheduling.
pub fn sample_omega(
    problem: &SwitchedProblem,
    cfg: &OmegaConfig,
) -> Result<PointCloud, OmegaError> {
    if cfg.n0 == 0 {
        return Err(OmegaError::BadConfig("n0 must be >= 1".into()));
    }
    if !(cfg.horizon >= 0.0 && cfg.horizon.is_finite()) {
        return Err(OmegaError::BadConfig(format!(
            "bad horizon {}",
            cfg.horizon
        )));
    }
    if !(cfg.jitter_radius >= 0.0 && cfg.thin_fraction >= 0.0) {
        return Err(OmegaError::BadConfig(
            "jitter radius and thinning fraction must be >= 0".into(),
        ));
    }
    let problem = problem.with_dwell(DwellTime::new(problem.dwell().delta, cfg.n0)?);
    let modes = problem.num_modes();

    let mut grid: Vec<f64> = cfg
        .jump_grid
        .iter()
        .copied()
        .filter(|t| t.is_finite() && *t >= 0.0 && *t < cfg.horizon)
        .collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let equilibria: Vec<CloudPoint> = (0..modes)
        .map(|sigma| CloudPoint {
            sigma,
            state: problem.equilibrium(sigma),
        })
        .collect();
    let eq_diameter = PointCloud::from_points(equilibria.clone()).diameter();
    let cell = cfg.thin_fraction * eq_diameter;

    let (runs, exhaustive) = plan_runs(modes, &grid, cfg);
    let outputs: Vec<RunOutput> = runs
        .par_iter()
        .map(|spec| execute_run(&problem, spec, cfg, cell))
        .collect::<Result<_, _>>()?;

    let mut seen = HashSet::new();
    let mut points = Vec::new();
    let mut lagrange_bound: f64 = 0.0;
    for eq in equilibria {
        lagrange_bound = lagrange_bound.max(eq.state.norm());
        seen.insert(cell_key(&eq, cell));
        points.push(eq);
    }
    for out in outputs {
        lagrange_bound = lagrange_bound.max(out.max_norm);
        for (key, point) in out.points {
            if seen.insert(key) {
                points.push(point);
            }
        }
    }

    Ok(PointCloud {
        points,
        meta: CloudMeta {
            modes,
            n0: cfg.n0,
            jump_grid: grid,
            horizon: cfg.horizon,
            step: cfg.step,
            runs: runs.len(),
            exhaustive,
            cell_size: cell,
            lagrange_bound,
        },
    })
}

/// `sup` of the cloud distance over samples with `t >= (1 - tail_fraction) T`,
/// where `T` is the arc's final time.
pub fn tail_distance(
    arc: &HybridArc,
    cloud: &PointCloud,
    tail_fraction: f64,
) -> Result<f64, OmegaError> {
    let t_end = arc.last().t;
    let t_start = (1.0 - tail_fraction) * t_end;
    let mut worst: f64 = 0.0;
    for s in arc.samples.iter().filter(|s| s.t >= t_start) {
        worst = worst.max(distance_to_cloud(&s.point.z, cloud)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Dwell-time rates, largest first.
    pub deltas: Vec<f64>,
    pub seeds: usize,
    pub horizon: f64,
    pub step: f64,
    pub tail_fraction: f64,
    /// Initial `q` is drawn from this ball around a random mode's `q*`.
    pub init_radius: f64,
    pub method: Method,
    pub base_seed: u64,
    pub record_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub seeds: usize,
    /// Maximum over seeds of the tail distance to the cloud.
    pub tail_distance: f64,
}

/// Random feasible initial point near a randomly chosen equilibrium, with
/// the full token budget.
pub fn random_initial_point(problem: &SwitchedProblem, radius: f64, seed: u64) -> HybridPoint {
    let mut rng = rng::seeded(seed);
    let sigma = rng.random_range(0..problem.num_modes());
    let n = problem.n();
    let dir = rng::zero_sum_direction(&mut rng, n);
    let r = rng::ball_radius(&mut rng, radius, n.saturating_sub(1));
    let q = &problem.kkt(sigma).q_star + dir * r;
    HybridPoint::new(OptState::at_rest(q), sigma, problem.dwell().n0_f64())
}

/// One perturbed run: seeded admissible schedule, seeded disturbance, timer
/// at the maximal rate `δ`.
pub fn perturbed_run(
    problem: &SwitchedProblem,
    x0: &HybridPoint,
    seed: u64,
    method: Method,
    horizon: f64,
    step: f64,
    record_every: usize,
) -> Result<HybridArc, OmegaError> {
    let dwell = problem.dwell();
    let sched = generate_schedule(
        rng::derive_seed(seed, 1),
        dwell.delta,
        dwell.n0,
        horizon,
        problem.num_modes(),
        x0.sigma,
    )?;
    let mut sim = SimConfig::new(
        SystemKind::perturbed(problem, rng::derive_seed(seed, 2)),
        method,
        horizon,
        step,
    );
    sim.record_every = record_every;
    Ok(simulate(problem, x0, &sched, &sim)?)
}

/// Runs the perturbed system for each `δ` and seed and reports the worst
/// tail distance to `cloud` per `δ`.
pub fn practical_stability_sweep(
    problem: &SwitchedProblem,
    cloud: &PointCloud,
    cfg: &SweepConfig,
) -> Result<Vec<SweepRow>, OmegaError> {
    if cloud.is_empty() {
        return Err(OmegaError::EmptyCloud);
    }
    if cfg.seeds == 0 || !(0.0..=1.0).contains(&cfg.tail_fraction) {
        return Err(OmegaError::BadConfig(
            "need seeds >= 1 and tail_fraction in [0, 1]".into(),
        ));
    }
    cfg.deltas
        .iter()
        .enumerate()
        .map(|(row, &delta)| {
            let p = problem.with_delta(delta)?;
            let worst = (0..cfg.seeds)
                .into_par_iter()
                .map(|s| {
                    let seed =
                        rng::derive_seed(rng::derive_seed(cfg.base_seed, row as u64), s as u64);
                    let x0 = random_initial_point(&p, cfg.init_radius, seed);
                    let arc = perturbed_run(
                        &p,
                        &x0,
                        seed,
                        cfg.method,
                        cfg.horizon,
                        cfg.step,
                        cfg.record_every,
                    )?;
                    tail_distance(&arc, cloud, cfg.tail_fraction)
                })
                .collect::<Result<Vec<f64>, OmegaError>>()?
                .into_iter()
                .fold(0.0, f64::max);
            Ok(SweepRow {
                delta,
                seeds: cfg.seeds,
                tail_distance: worst,
            })
        })
        .collect()
}

/// First row index `i` with `rows[i].tail_distance > slack · rows[i-1]
/// .tail_distance + floor`, if any. Rows are expected in decreasing `δ`.
pub fn first_sweep_increase(rows: &[SweepRow], slack: f64, floor: f64) -> Option<usize> {
    (1..rows.len()).find(|&i| rows[i].tail_distance > slack * rows[i - 1].tail_distance + floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::DampingBounds;
    use crate::graph::{LaplacianPair, Topology};
    use crate::objectives::{QuadraticObjective, SwitchedObjectiveFamily};
    use nalgebra::DVector;

    fn hihbm() -> Method {
        Method::hybrid(DampingBounds::new(0.01, 35.5).unwrap())
    }

    fn two_node(modes: &[(&[f64], &[f64])]) -> SwitchedProblem {
        let objs = modes
            .iter()
            .map(|(c, b)| QuadraticObjective::from_slices(c, b).unwrap())
            .collect();
        let family = SwitchedObjectiveFamily::new(objs, 100.0).unwrap();
        let lap = LaplacianPair::build(&Topology::Path, 2).unwrap();
        SwitchedProblem::new(lap, family, DwellTime::new(0.0338, 1).unwrap()).unwrap()
    }

    #[test]
    fn single_mode_cloud_is_its_equilibrium() {
        let problem = two_node(&[(&[10.0, 15.0], &[1.0, -2.0])]);
        let cfg = OmegaConfig::new(hihbm(), 1, vec![0.0, 1.0], 5.0, 1e-2);
        let cloud = sample_omega(&problem, &cfg).unwrap();
        assert_eq!(cloud.len(), 1);
        let d = cloud.distance(&problem.equilibrium(0)).unwrap();
        assert!(d <= 1e-6);
    }

    #[test]
    fn two_modes_cover_both_transfer_flows() {
        let problem = two_node(&[(&[10.0, 15.0], &[1.0, -2.0]), (&[18.0, 11.0], &[-4.0, 3.0])]);
        let mut cfg = OmegaConfig::new(hihbm(), 1, vec![0.0], 20.0, 1e-2);
        cfg.jitter_count = 2;
        let cloud = sample_omega(&problem, &cfg).unwrap();
        for sigma in 0..2 {
            assert_eq!(cloud.distance(&problem.equilibrium(sigma)).unwrap(), 0.0);
        }
        // the flow from q*_1 under mode 2 passes through its first step
        let x0 = HybridPoint::new(problem.equilibrium(0), 1, 1.0);
        let sim = SimConfig::new(SystemKind::Ideal, hihbm(), 3.0, 1e-2);
        let arc = simulate(&problem, &x0, &SwitchSchedule::empty(0.0, 1), &sim).unwrap();
        let res = cloud.resolution();
        for s in arc.samples.iter().step_by(17) {
            assert!(cloud.distance(&s.point.z).unwrap() <= res + 1e-12);
        }
        assert!(cloud
            .points()
            .iter()
            .all(|p| p.state.norm() <= cloud.meta().lagrange_bound));
    }

    #[test]
    fn distance_examples() {
        let a = OptState::new(DVector::from_vec(vec![1.0, 2.0]), DVector::zeros(2));
        let cloud = PointCloud::from_points(vec![CloudPoint {
            sigma: 0,
            state: a.clone(),
        }]);
        assert_eq!(cloud.distance(&a).unwrap(), 0.0);
        let mut shifted = a.clone();
        shifted.q[0] += 0.25;
        assert!(cloud.distance(&shifted).unwrap() <= 0.25);
        assert_eq!(
            PointCloud::default().distance(&a),
            Err(OmegaError::EmptyCloud)
        );
    }

    #[test]
    fn enumeration_counts() {
        let cfg = OmegaConfig::new(hihbm(), 2, vec![], 1.0, 0.1);
        // 3 modes, grid of 4, up to 2 jumps: per start 4·2 + 6·4 = 32
        let (runs, exhaustive) = plan_runs(3, &[0.0, 0.1, 0.2, 0.3], &cfg);
        assert!(exhaustive);
        assert_eq!(runs.len(), 3 * 32);
        let (runs, exhaustive) = plan_runs(9, &[0.0, 0.1, 0.2], &cfg);
        assert!(!exhaustive);
        assert_eq!(runs.len(), cfg.sample_cap);
        assert!(runs.iter().all(|r| r.times.windows(2).all(|w| w[0] < w[1])));
    }

    #[test]
    fn sweep_increase_detection() {
        let row = |delta, d| SweepRow {
            delta,
            seeds: 1,
            tail_distance: d,
        };
        let ok = [row(0.1, 1.0), row(0.05, 1.5), row(0.01, 0.2)];
        assert_eq!(first_sweep_increase(&ok, 2.0, 0.0), None);
        let bad = [row(0.1, 1.0), row(0.05, 2.5)];
        assert_eq!(first_sweep_increase(&bad, 2.0, 0.0), Some(1));
    }
}
