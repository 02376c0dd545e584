use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use switchopt_cli::experiments::{run_figure1, run_figure2, run_figure3, Figure2Variant};
use switchopt_cli::scenario::{builtin, Scenario, ScenarioError, BUILTIN};

fn switchopt(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchopt"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn builtin_text(name: &str) -> &'static str {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .expect("built-in")
        .1
}

#[test]
fn builtin_scenarios_parse_and_round_trip() {
    for (name, _) in BUILTIN {
        let sc = builtin(name).unwrap();
        let again = Scenario::from_toml_str(&sc.canonical(), None).unwrap();
        assert_eq!(sc, again);
        assert_eq!(sc.hash(), again.hash());
    }
}

#[test]
fn unknown_field_is_rejected_by_name() {
    let text = builtin_text("figure2").replace("n0 = 1", "n0 = 1\nextra = 3");
    let err = Scenario::from_toml_str(&text, None).unwrap_err();
    assert!(err.to_string().contains("extra"), "{err}");
}

#[test]
fn missing_field_is_rejected_by_name() {
    let text = builtin_text("figure2").replace("band = 0.0\n", "");
    let err = Scenario::from_toml_str(&text, None).unwrap_err();
    assert!(err.to_string().contains("band"), "{err}");
}

#[test]
fn bad_values_name_the_field() {
    let cases = [
        ("step = 1e-3", "step = -1.0", "step"),
        ("n = 20", "n = 1", "n"),
        ("delta = 0.06", "delta = -0.06", "delta"),
        ("k_lo = 0.01", "k_lo = 50.0", "k_lo"),
    ];
    for (from, to, name) in cases {
        let text = builtin_text("figure2").replace(from, to);
        match Scenario::from_toml_str(&text, None) {
            Err(ScenarioError::Field { field, .. }) => assert!(field.contains(name), "{field}"),
            other => panic!("{to}: expected a field error, got {other:?}"),
        }
    }
}

#[test]
fn scenario_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        builtin_text("figure3").replace("seed = 2024\nn", "seed = 2024\ncolour = 1\nn"),
    )
    .unwrap();
    let out = switchopt(
        &["--scenario", bad.to_str().unwrap(), "figure3"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn figure_outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let status = switchopt(&["figure2", "--horizon", "30"], out).status;
        assert!(status.success());
        let status = switchopt(&["figure3"], out).status;
        assert!(status.success());
    }
    for name in [
        "figure2_persistent.csv",
        "figure3_traces.csv",
        "figure3_summary.txt",
    ] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn outputs_carry_provenance_and_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    assert!(
        switchopt(&["figure2", "--horizon", "5", "--seed", "9"], dir.path())
            .status
            .success()
    );
    let text = fs::read_to_string(dir.path().join("figure2_persistent.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(
        header.starts_with("# switchopt ") && header.contains("seed=9"),
        "{header}"
    );
    assert!(header.contains("scenario_sha256="));
    let columns: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(columns.len(), 4 + 40 + 3);
    assert_eq!(&columns[..4], &["t", "j", "sigma", "tau"]);
    assert_eq!(columns.last(), Some(&"dist_to_qstar_sigma"));
    assert!(lines.all(|l| l.split(',').count() == columns.len()));
}

#[test]
fn arc_rows_are_grid_samples_plus_one_per_jump() {
    let mut sc = builtin("figure2").unwrap();
    sc.horizon = 40.0;
    sc.record_every = 1;
    let r = run_figure2(&sc, Figure2Variant::Persistent).unwrap();
    let steps = (sc.horizon / sc.step).round() as usize;
    assert!(r.arc.jump_count() > 0);
    assert_eq!(r.arc.samples.len(), steps + 1 + r.arc.jump_count());
}

#[test]
fn sparse_switching_jumps_less_and_respects_the_bound() {
    let sc = builtin("figure2").unwrap();
    let dense = run_figure2(&sc, Figure2Variant::Persistent).unwrap();
    let sparse = run_figure2(&sc, Figure2Variant::Sparse).unwrap();
    assert!(sparse.arc.jump_count() < dense.arc.jump_count());
    for r in [&dense, &sparse] {
        assert!(r.arc.jump_count() as f64 <= r.jump_bound());
    }
}

#[test]
fn smaller_delta_tracks_the_cloud_more_closely() {
    let mut sc = builtin("figure1").unwrap();
    let f = sc.figure1.as_mut().unwrap();
    f.sweep_deltas = vec![0.1];
    f.sweep_seeds = 1;
    let r = run_figure1(&sc).unwrap();
    assert!(r.small_delta_tail_distance <= r.tail_distance + r.cloud.resolution());
    assert!(r.tail_ratio() <= 0.05);
}

#[test]
fn figure3_methods_differ_and_all_converge_on_long_horizons() {
    let mut sc = builtin("figure3").unwrap();
    sc.horizon = 100.0;
    let r = run_figure3(&sc).unwrap();
    let names: Vec<&str> = r.traces.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["gradient", "hbm_k5", "hbm_k1", "hihbm"]);
    let first = r.traces[0].last().suboptimality;
    assert!(r.traces[1..]
        .iter()
        .any(|t| t.last().suboptimality != first));
    for t in &r.traces {
        assert!(
            t.last().distance <= 1e-2,
            "{} {}",
            t.name,
            t.last().distance
        );
        assert!(t.samples[0].suboptimality > t.last().suboptimality);
    }
}

#[test]
fn corrupted_pseudo_inverse_fails_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = switchopt(&["check", "--corrupt-pseudo-inverse"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout
            .lines()
            .any(|l| l.starts_with("FAIL laplacian identities")),
        "{stdout}"
    );
}

#[test]
fn coarse_step_breaks_lyapunov_decrease() {
    use switchopt_cli::checks::{global_attraction, CheckOptions};
    let opts = CheckOptions {
        step: 0.1,
        ..CheckOptions::default()
    };
    assert!(!global_attraction(5, 1e3, 20.0, &opts).passed);
}

#[test]
fn validate_schedule_reports_dwell_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    let good = dir.path().join("good.txt");
    fs::write(&bad, "5 2\n10 1\n15 2\n").unwrap();
    fs::write(&good, "# persistent but sparse enough\n0 2\n40 1\n80 2\n").unwrap();

    let out = switchopt(
        &[
            "validate-schedule",
            bad.to_str().unwrap(),
            "--delta",
            "0.06",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("invalid"));

    let out = switchopt(
        &[
            "validate-schedule",
            good.to_str().unwrap(),
            "--delta",
            "0.06",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "valid");

    fs::write(&bad, "5 0\n").unwrap();
    let out = switchopt(&["validate-schedule", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
