//! CSV writers. Every file starts with one `#` provenance line; numbers use
//! the shortest round-trip decimal form, so output is byte-reproducible.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use switchopt::hybrid::HybridArc;
use switchopt::omega::{PointCloud, SweepRow};
use switchopt::problem::SwitchedProblem;
use switchopt::rng::RNG_NAME;

use crate::experiments::Trace;
use crate::scenario::Scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub scenario_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn of(sc: &Scenario) -> Self {
        Self {
            scenario_hash: sc.hash(),
            seed: sc.seed,
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# switchopt {VERSION} scenario_sha256={} seed={} rng={RNG_NAME}\n",
            self.scenario_hash, self.seed
        )
    }
}

fn push_row<I: IntoIterator<Item = String>>(out: &mut String, cells: I) {
    let mut first = true;
    for c in cells {
        if !first {
            out.push(',');
        }
        out.push_str(&c);
        first = false;
    }
    out.push('\n');
}

fn indexed(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// `t, j, sigma, tau, q_1..q_n, p_1..p_n, V, phi, dist_to_qstar_sigma`,
/// with `sigma` 1-based.
pub fn arc_csv(prov: &Provenance, problem: &SwitchedProblem, arc: &HybridArc) -> String {
    let n = problem.n();
    let mut out = prov.header();
    push_row(
        &mut out,
        ["t", "j", "sigma", "tau"]
            .into_iter()
            .map(String::from)
            .chain(indexed("q", n))
            .chain(indexed("p", n))
            .chain(
                ["V", "phi", "dist_to_qstar_sigma"]
                    .into_iter()
                    .map(String::from),
            ),
    );
    for s in &arc.samples {
        let (z, sigma) = (&s.point.z, s.point.sigma);
        let phi = problem.suboptimality(sigma, &z.q) + problem.phi_star(sigma);
        let dist = (&z.q - &problem.kkt(sigma).q_star).norm();
        push_row(
            &mut out,
            [
                s.t.to_string(),
                s.j.to_string(),
                (sigma + 1).to_string(),
                s.point.tau.to_string(),
            ]
            .into_iter()
            .chain(z.components().map(|c| c.to_string()))
            .chain([
                problem.lyapunov(sigma, z).to_string(),
                phi.to_string(),
                dist.to_string(),
            ]),
        );
    }
    out
}

/// `sigma, q_1..q_n, p_1..p_n`, with `sigma` 1-based.
pub fn cloud_csv(prov: &Provenance, cloud: &PointCloud) -> String {
    let n = cloud.points().first().map_or(0, |p| p.state.dim());
    let mut out = prov.header();
    let m = cloud.meta();
    let _ = writeln!(
        out,
        "# modes={} n0={} jump_grid={:?} horizon={} step={} runs={} exhaustive={} cell_size={} lagrange_bound={}",
        m.modes, m.n0, m.jump_grid, m.horizon, m.step, m.runs, m.exhaustive, m.cell_size, m.lagrange_bound
    );
    push_row(
        &mut out,
        std::iter::once("sigma".to_string())
            .chain(indexed("q", n))
            .chain(indexed("p", n)),
    );
    for p in cloud.points() {
        push_row(
            &mut out,
            std::iter::once((p.sigma + 1).to_string())
                .chain(p.state.components().map(|c| c.to_string())),
        );
    }
    out
}

/// `delta, seeds, tail_distance`
pub fn sweep_csv(prov: &Provenance, rows: &[SweepRow]) -> String {
    let mut out = prov.header();
    out.push_str("delta,seeds,tail_distance\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.delta, r.seeds, r.tail_distance);
    }
    out
}

/// Long format: `method, t, suboptimality, distance`.
pub fn traces_csv(prov: &Provenance, traces: &[Trace]) -> String {
    let mut out = prov.header();
    out.push_str("method,t,suboptimality,distance\n");
    for tr in traces {
        for s in &tr.samples {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                tr.name, s.t, s.suboptimality, s.distance
            );
        }
    }
    out
}

/// `key = value` lines.
pub fn summary_text(prov: &Provenance, entries: &[(String, String)]) -> String {
    let mut out = prov.header();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
