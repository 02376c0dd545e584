//! Property suites with fixed seeds, run by `switchopt check` and by the
//! acceptance harness.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use switchopt::dynamics::{project_feasible, DampingBounds, Method, OptState};
use switchopt::graph::{LaplacianPair, Topology};
use switchopt::hybrid::{
    automaton_admits, generate_schedule, simulate, HybridPoint, SimConfig, SimError, SwitchEvent,
    SwitchSchedule, SystemKind,
};
use switchopt::integrate::{backward_deviation, integrate_mode};
use switchopt::objectives::{
    sample_family, QuadraticObjective, SmoothObjective, DEFAULT_CURVATURE, DEFAULT_LINEAR,
};
use switchopt::omega::{sample_omega, OmegaConfig};
use switchopt::problem::{DwellTime, SwitchedProblem};
use switchopt::rng::{self, SimRng};

use rand::Rng;

/// Budget used by every check.
pub const BUDGET: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub seed: u64,
    pub step: f64,
    /// Negate one off-diagonal entry of every generalized inverse.
    pub corrupt_pseudo_inverse: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            seed: 2024,
            step: 1e-3,
            corrupt_pseudo_inverse: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {:<28} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

pub fn hihbm() -> Method {
    Method::hybrid(DampingBounds::new(0.01, 35.5).expect("valid bounds"))
}

fn laplacian(topology: &Topology, n: usize, opts: &CheckOptions) -> LaplacianPair {
    let pair = LaplacianPair::build(topology, n).expect("built-in topology");
    if !opts.corrupt_pseudo_inverse {
        return pair;
    }
    let mut bad = pair.pseudo_inverse().clone();
    bad[(0, 1)] = -bad[(0, 1)];
    LaplacianPair::from_raw_parts(pair.laplacian().clone(), bad)
}

/// A sampled relay problem: `n` nodes, `modes` objectives with curvatures in
/// `[10, 20]` and linear terms in `[-10, 10]`.
pub fn sampled_problem(
    seed: u64,
    n: usize,
    modes: usize,
    topology: &Topology,
    dwell: DwellTime,
    opts: &CheckOptions,
) -> SwitchedProblem {
    let family = sample_family(seed, n, modes, DEFAULT_CURVATURE, DEFAULT_LINEAR, BUDGET)
        .expect("default ranges are valid");
    SwitchedProblem::new(laplacian(topology, n, opts), family, dwell).expect("dimensions agree")
}

fn dwell(delta: f64, n0: u32) -> DwellTime {
    DwellTime::new(delta, n0).expect("valid dwell parameters")
}

/// Feasible point within `radius` of `center` (tangent directions only).
fn random_feasible(rng: &mut SimRng, center: &OptState, radius: f64) -> OptState {
    let (dq, dp) = rng::tangent_ball_sample(rng, center.dim(), radius);
    project_feasible(&OptState::new(&center.q + dq, &center.p + dp), BUDGET)
}

pub fn laplacian_identities(opts: &CheckOptions) -> CheckResult {
    let (mut worst_null, mut worst_proj): (f64, f64) = (0.0, 0.0);
    for topology in [Topology::Path, Topology::Complete] {
        for n in [2, 3, 10, 50] {
            let (a, b) = laplacian(&topology, n, opts).identity_residuals();
            worst_null = worst_null.max(a);
            worst_proj = worst_proj.max(b);
        }
    }
    CheckResult::new(
        "laplacian identities",
        worst_null <= 1e-10 && worst_proj <= 1e-8,
        format!("max |Ldag 1| = {worst_null:.2e} (tol 1e-10), max |L Ldag - Pi|_F = {worst_proj:.2e} (tol 1e-8)"),
    )
}

/// Solves the KKT system `[P 1; 1ᵀ 0] [q; μ] = [-b; d]` directly.
pub fn kkt_direct(obj: &QuadraticObjective, budget: f64) -> (DVector<f64>, f64) {
    let n = obj.dim();
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for i in 0..n {
        a[(i, i)] = obj.curvature()[i];
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        rhs[i] = -obj.linear()[i];
    }
    rhs[n] = budget;
    let sol = a.lu().solve(&rhs).expect("KKT matrix is nonsingular");
    (sol.rows(0, n).into_owned(), sol[n])
}

pub fn kkt_oracle(instances: usize, opts: &CheckOptions) -> CheckResult {
    let lap = laplacian(&Topology::Path, 20, opts);
    let (mut stat, mut feas, mut lres, mut diff): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..instances {
        let family = sample_family(
            rng::derive_seed(opts.seed, i as u64),
            20,
            1,
            DEFAULT_CURVATURE,
            DEFAULT_LINEAR,
            BUDGET,
        )
        .expect("default ranges");
        let obj = family.mode(0);
        let sol = obj.kkt_solve(BUDGET);
        let (s, f) = sol.residuals(obj, BUDGET);
        stat = stat.max(s);
        feas = feas.max(f);
        lres = lres.max(sol.laplacian_residual(obj, &lap));
        let (q, mu) = kkt_direct(obj, BUDGET);
        diff = diff
            .max((&q - &sol.q_star).amax())
            .max((mu - sol.mu_star).abs());
    }
    CheckResult::new(
        "kkt oracle",
        stat <= 1e-9 && feas <= 1e-9 && lres <= 1e-8 && diff <= 1e-9,
        format!(
            "{instances} instances: stationarity {stat:.2e}, feasibility {feas:.2e} (tol 1e-9), |L grad| {lres:.2e} (tol 1e-8), vs direct solve {diff:.2e}"
        ),
    )
}

pub fn conservation(runs: usize, horizon: f64, opts: &CheckOptions) -> CheckResult {
    let problem = sampled_problem(opts.seed, 20, 1, &Topology::Path, dwell(0.0, 1), opts);
    let methods = [
        Method::Gradient,
        Method::heavy_ball(5.0).expect("gain"),
        hihbm(),
    ];
    let worst = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::seeded(rng::derive_seed(opts.seed ^ 0xc0, r as u64));
            let x0 = random_feasible(&mut rng, &problem.equilibrium(0), 100.0);
            let mut worst: (f64, f64) = (0.0, 0.0);
            integrate_mode(
                &x0,
                &methods[r % methods.len()],
                problem.flow_objective(0),
                problem.laplacian(),
                BUDGET,
                horizon,
                opts.step,
                |_, x| {
                    let (rq, rp) = x.feasibility_residual(BUDGET);
                    worst = (worst.0.max(rq.abs()), worst.1.max(rp.abs()));
                },
            );
            worst
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    CheckResult::new(
        "conservation",
        worst.0 <= 1e-6 && worst.1 <= 1e-6,
        format!(
            "{runs} runs to t={horizon}: max |1'q - d| = {:.2e}, max |1'p| = {:.2e} (tol 1e-6)",
            worst.0, worst.1
        ),
    )
}

/// Largest per-step increase of `V` and final `‖q - q*‖` along one HiHBM
/// run.
fn lyapunov_run(problem: &SwitchedProblem, x0: &OptState, horizon: f64, step: f64) -> (f64, f64) {
    let mut prev = f64::NAN;
    let mut worst_increase = f64::NEG_INFINITY;
    let last = integrate_mode(
        x0,
        &hihbm(),
        problem.flow_objective(0),
        problem.laplacian(),
        BUDGET,
        horizon,
        step,
        |_, x| {
            let v = problem.lyapunov(0, x);
            if !v.is_finite() {
                worst_increase = f64::INFINITY;
            } else if prev.is_finite() {
                worst_increase = worst_increase.max(v - prev);
            }
            prev = v;
        },
    );
    let dist = (&last.q - &problem.kkt(0).q_star).norm();
    (
        worst_increase,
        if dist.is_finite() {
            dist
        } else {
            f64::INFINITY
        },
    )
}

/// HiHBM from random feasible starts within `radius` of `(q*, 0)` on the
/// path and complete graphs: `V` never rises by more than 1e-8 per step
/// and `q` ends within 1e-3 of `q*`.
pub fn global_attraction(
    starts: usize,
    radius: f64,
    horizon: f64,
    opts: &CheckOptions,
) -> CheckResult {
    let mut lines = Vec::new();
    let mut passed = true;
    for topology in [Topology::Path, Topology::Complete] {
        let problem = sampled_problem(opts.seed, 20, 1, &topology, dwell(0.0, 1), opts);
        let (inc, dist) = (0..starts)
            .into_par_iter()
            .map(|s| {
                let mut rng = rng::seeded(rng::derive_seed(opts.seed ^ 0x6a5, s as u64));
                let x0 = random_feasible(&mut rng, &problem.equilibrium(0), radius);
                lyapunov_run(&problem, &x0, horizon, opts.step)
            })
            .reduce(
                || (f64::NEG_INFINITY, 0.0),
                |a, b| (a.0.max(b.0), a.1.max(b.1)),
            );
        passed &= inc <= 1e-8 && dist <= 1e-3;
        lines.push(format!(
            "{topology:?}: max dV/step {inc:.2e} (tol 1e-8), max |q(T)-q*| {dist:.2e} (tol 1e-3)"
        ));
    }
    CheckResult::new(
        "global attraction",
        passed,
        format!(
            "{starts} starts, T={horizon}, step {}: {}",
            opts.step,
            lines.join("; ")
        ),
    )
}

pub fn gradient_check(points: usize, opts: &CheckOptions) -> CheckResult {
    let family = sample_family(opts.seed, 20, 3, DEFAULT_CURVATURE, DEFAULT_LINEAR, BUDGET)
        .expect("default ranges");
    let mut rng = rng::seeded(opts.seed ^ 0x9d);
    let mut worst: f64 = 0.0;
    for k in 0..points {
        let obj = family.mode(k % 3);
        let q = DVector::from_fn(20, |_, _| rng.random_range(-50.0..50.0));
        let g = obj.gradient(&q);
        for i in 0..20 {
            let h = 1e-3 * q[i].abs().max(1.0);
            let (mut up, mut down) = (q.clone(), q.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    CheckResult::new(
        "gradient check",
        worst <= 1e-6,
        format!("{points} points: max relative error {worst:.2e} (tol 1e-6)"),
    )
}

pub fn backward_uniqueness(modes: usize, opts: &CheckOptions) -> CheckResult {
    let problem = sampled_problem(opts.seed, 20, modes, &Topology::Path, dwell(0.0, 1), opts);
    let worst = (0..modes)
        .into_par_iter()
        .map(|sigma| {
            backward_deviation(
                &problem.equilibrium(sigma),
                &hihbm(),
                problem.flow_objective(sigma),
                problem.laplacian(),
                BUDGET,
                10.0,
                opts.step,
            )
        })
        .reduce(|| 0.0, f64::max);
    CheckResult::new(
        "backward uniqueness",
        worst <= 1e-6,
        format!("{modes} modes, t in [0, 10]: max deviation {worst:.2e} (tol 1e-6)"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ScheduleCase {
    delta: f64,
    n0: u32,
}

fn random_case(rng: &mut SimRng) -> ScheduleCase {
    ScheduleCase {
        delta: rng.random_range(0.01..0.5),
        n0: rng.random_range(1..=3),
    }
}

fn retarget(times: &[f64], rng: &mut SimRng, modes: usize) -> Vec<SwitchEvent> {
    let mut current = 0;
    times
        .iter()
        .map(|&t| {
            let mut m = rng.random_range(0..modes - 1);
            if m >= current {
                m += 1;
            }
            current = m;
            SwitchEvent::new(t, m)
        })
        .collect()
}

/// A schedule containing a burst of `k` switches inside a window of length
/// `w` with `δ w + N₀ < k`.
fn adversarial_schedule(
    rng: &mut SimRng,
    case: ScheduleCase,
    horizon: f64,
    modes: usize,
) -> SwitchSchedule {
    let base = generate_schedule(rng.random(), case.delta, case.n0, horizon, modes, 0)
        .expect("valid parameters");
    let k = case.n0 as usize + rng.random_range(1..=3);
    let max_w = ((k as f64 - f64::from(case.n0)) / case.delta).min(horizon / 2.0);
    let w = rng.random_range(0.05..0.9) * max_w;
    let s = rng.random_range(0.0..horizon - w);
    let mut times = base.times();
    times.push(s);
    times.push(s + w);
    times.extend((0..k - 2).map(|_| rng.random_range(s..s + w)));
    times.sort_by(f64::total_cmp);
    times.dedup();
    SwitchSchedule::new(retarget(&times, rng, modes), case.delta, case.n0)
        .expect("sorted distinct times")
}

/// Generated schedules pass validation, adversarial ones fail, and
/// simulation with a full token budget succeeds exactly on the
/// token-feasible schedules.
pub fn dwell_correspondence(count: usize, opts: &CheckOptions) -> CheckResult {
    const HORIZON: f64 = 100.0;
    const MODES: usize = 3;
    let mut rng = rng::seeded(opts.seed ^ 0xd3e1);
    let mut schedules = Vec::with_capacity(2 * count);
    for _ in 0..count {
        let case = random_case(&mut rng);
        schedules.push((
            true,
            generate_schedule(rng.random(), case.delta, case.n0, HORIZON, MODES, 0)
                .expect("valid parameters"),
        ));
    }
    for _ in 0..count {
        let case = random_case(&mut rng);
        schedules.push((false, adversarial_schedule(&mut rng, case, HORIZON, MODES)));
    }

    let base = sampled_problem(opts.seed, 2, MODES, &Topology::Path, dwell(0.0, 1), opts);
    // The token gate uses exact event times; the step only paces the flow.
    let step = 0.1;
    let outcomes: Vec<(bool, bool, bool, bool)> = schedules
        .par_iter()
        .map(|(generated, sched)| {
            let valid = sched.validate().is_valid();
            let n0 = f64::from(sched.n0());
            let tokens = automaton_admits(&sched.times(), sched.delta(), sched.n0(), n0).is_ok();
            let problem = base.with_dwell(dwell(sched.delta(), sched.n0()));
            let horizon = sched.times().last().copied().unwrap_or(0.0) + step;
            let cfg = SimConfig::new(
                SystemKind::Perturbed {
                    tau_rate: sched.delta(),
                    disturbance_seed: None,
                },
                Method::Gradient,
                horizon,
                step,
            );
            let x0 = HybridPoint::new(problem.equilibrium(0), 0, n0);
            let simulated = match simulate(&problem, &x0, sched, &cfg) {
                Ok(arc) => arc.switching_events().len() == sched.len(),
                Err(SimError::JumpNotEnabled { .. }) => false,
                Err(e) => panic!("unexpected simulation error: {e}"),
            };
            (*generated, valid, tokens, simulated)
        })
        .collect();

    let generated_ok = outcomes.iter().filter(|o| o.0 && o.1).count();
    let adversarial_rejected = outcomes.iter().filter(|o| !o.0 && !o.1).count();
    let agree = outcomes.iter().filter(|o| o.1 == o.2 && o.2 == o.3).count();
    CheckResult::new(
        "dwell-time correspondence",
        generated_ok == count && adversarial_rejected == count && agree == 2 * count,
        format!(
            "generated valid {generated_ok}/{count}, adversarial rejected {adversarial_rejected}/{count}, validate = tokens = simulate on {agree}/{}",
            2 * count
        ),
    )
}

/// Jump bound, timer range, time-domain bookkeeping and the Lagrange
/// probe over seeded arcs.
pub fn hybrid_invariants(trials: usize, opts: &CheckOptions) -> CheckResult {
    const HORIZON: f64 = 100.0;
    let problem = sampled_problem(opts.seed, 5, 3, &Topology::Path, dwell(0.1, 2), opts);
    let spread = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| problem.equilibrium(a).distance(&problem.equilibrium(b)))
        .fold(0.0, f64::max);
    let step = 1e-2;
    let failures: Vec<String> = (0..trials)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = rng::seeded(rng::derive_seed(opts.seed ^ 0x4b, k as u64));
            let sigma0 = rng.random_range(0..3);
            let x0 = random_feasible(&mut rng, &problem.equilibrium(sigma0), 50.0);
            let offset = x0.distance(&problem.equilibrium(sigma0));
            let start = HybridPoint::new(x0, sigma0, 2.0);
            let sched = generate_schedule(rng.random(), 0.1, 2, HORIZON, 3, sigma0).ok()?;

            let perturbed = SimConfig::new(
                SystemKind::perturbed(&problem, rng.random()),
                hihbm(),
                HORIZON,
                step,
            );
            let arc = match simulate(&problem, &start, &sched, &perturbed) {
                Ok(a) => a,
                Err(e) => return Some(format!("trial {k}: {e}")),
            };
            if arc.jump_count() as f64 > 0.1 * HORIZON + 2.0 {
                return Some(format!("trial {k}: {} jumps", arc.jump_count()));
            }
            if let Err(e) = arc.check_domain(2.0) {
                return Some(format!("trial {k}: {e}"));
            }
            let realized = SwitchSchedule::new(arc.switching_events(), 0.1, 2).ok()?;
            if !realized.validate().is_valid() {
                return Some(format!("trial {k}: realized switching violates dwell time"));
            }

            // Ideal system: the timer is frozen, so only the first N₀ events
            // can fire.
            let ideal_events: Vec<SwitchEvent> = sched.events().iter().take(2).copied().collect();
            let ideal_sched = SwitchSchedule::new(ideal_events, 0.0, 2).ok()?;
            let ideal = SimConfig::new(SystemKind::Ideal, hihbm(), HORIZON, step);
            let arc = simulate(&problem, &start, &ideal_sched, &ideal).ok()?;
            let reference = problem.equilibrium(sigma0);
            let sup = arc
                .samples
                .iter()
                .map(|s| s.point.z.distance(&reference))
                .fold(0.0, f64::max);
            let bound = 10.0 * (spread + offset);
            (sup > bound).then(|| format!("trial {k}: sup {sup:.3e} > Lagrange bound {bound:.3e}"))
        })
        .collect();
    CheckResult::new(
        "hybrid invariants",
        failures.is_empty(),
        if failures.is_empty() {
            format!("{trials} trials: jump bound, tau range, domain, realized dwell time, Lagrange probe")
        } else {
            failures.join("; ")
        },
    )
}

/// Cloud contents on a small two-node problem: equilibria present, points
/// bounded, both transfer flows covered, and more jump times or a longer
/// horizon never lose coverage.
pub fn omega_invariants(opts: &CheckOptions) -> CheckResult {
    let problem = sampled_problem(opts.seed, 2, 2, &Topology::Path, dwell(0.0338, 1), opts);
    let step = 1e-2;
    let cfg = |grid: Vec<f64>, horizon: f64| {
        let mut c = OmegaConfig::new(hihbm(), 1, grid, horizon, step);
        c.jitter_count = 2;
        c.seed = opts.seed;
        c
    };
    let small = match sample_omega(&problem, &cfg(vec![0.0], 10.0)) {
        Ok(c) => c,
        Err(e) => return CheckResult::new("omega invariants", false, e.to_string()),
    };
    let big = sample_omega(&problem, &cfg(vec![0.0, 1.0], 15.0)).expect("same settings");
    let res = small.resolution();
    let mut problems = Vec::new();

    for sigma in 0..2 {
        if small
            .distance(&problem.equilibrium(sigma))
            .expect("nonempty")
            > 1e-6
        {
            problems.push(format!("equilibrium {} missing", sigma + 1));
        }
    }
    let bound = small.meta().lagrange_bound;
    if small.points().iter().any(|p| p.state.norm() > bound) {
        problems.push("point beyond the Lagrange bound".into());
    }
    for (from, to) in [(0, 1), (1, 0)] {
        let x0 = HybridPoint::new(problem.equilibrium(from), to, 1.0);
        let sim = SimConfig::new(SystemKind::Ideal, hihbm(), 10.0, step);
        let arc = simulate(&problem, &x0, &SwitchSchedule::empty(0.0, 1), &sim).expect("ideal run");
        let worst = arc
            .samples
            .iter()
            .map(|s| small.distance(&s.point.z).expect("nonempty"))
            .fold(0.0, f64::max);
        if worst > res + 1e-12 {
            problems.push(format!(
                "flow {}->{} not covered: {worst:.2e} > resolution {res:.2e}",
                from + 1,
                to + 1
            ));
        }
    }
    let shrink = small
        .points()
        .iter()
        .map(|p| big.distance(&p.state).expect("nonempty"))
        .fold(0.0, f64::max);
    if shrink > res + 1e-12 {
        problems.push(format!("enlarged cloud lost coverage: {shrink:.2e}"));
    }

    let single = sampled_problem(opts.seed, 2, 1, &Topology::Path, dwell(0.0338, 1), opts);
    match sample_omega(&single, &cfg(vec![0.0, 1.0], 5.0)) {
        Ok(c) if c.len() == 1 => {}
        Ok(c) => problems.push(format!("single-mode cloud has {} points", c.len())),
        Err(e) => problems.push(e.to_string()),
    }

    CheckResult::new(
        "omega invariants",
        problems.is_empty(),
        if problems.is_empty() {
            format!(
                "{} points, resolution {res:.2e}, Lagrange bound {bound:.2e}",
                small.len()
            )
        } else {
            problems.join("; ")
        },
    )
}

/// Every suite at the sizes used by `switchopt check`.
pub fn run_checks(opts: &CheckOptions) -> Vec<CheckResult> {
    vec![
        laplacian_identities(opts),
        kkt_oracle(100, opts),
        gradient_check(20, opts),
        conservation(50, 50.0, opts),
        global_attraction(20, 1e3, 50.0, opts),
        backward_uniqueness(10, opts),
        dwell_correspondence(1000, opts),
        hybrid_invariants(50, opts),
        omega_invariants(opts),
    ]
}
