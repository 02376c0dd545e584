use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use switchopt_cli::checks::{run_checks, CheckOptions};
use switchopt_cli::experiments::{
    describe_verdict, parse_schedule, run_figure1, run_figure2, run_figure3, run_omega,
    ExperimentError, Figure2Variant,
};
use switchopt_cli::output::{
    arc_csv, cloud_csv, summary_text, sweep_csv, traces_csv, write_file, Provenance,
};
use switchopt_cli::scenario::{builtin, Overrides, Scenario, ScenarioError};

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_SCENARIO: u8 = 2;
/// I/O or numerical failure while running a valid scenario.
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "switchopt",
    version,
    about = "Heavy-ball optimization under switching objectives"
)]
struct Cli {
    /// Scenario file; defaults to the built-in scenario of the subcommand.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ω-limit cloud of the ideal system plus one perturbed arc.
    Figure1,
    /// Objective traces under persistent or sparse switching.
    Figure2 {
        #[arg(long, value_enum, default_value = "persistent")]
        variant: Variant,
    },
    /// Gradient flow, heavy ball and HiHBM on one fixed objective.
    Figure3,
    /// Sample the Ω-limit cloud only.
    Omega,
    /// Check a schedule file (`time mode` per line) against the dwell-time
    /// condition of the scenario.
    ValidateSchedule {
        file: PathBuf,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        n0: Option<u32>,
    },
    /// Run the property suites.
    Check {
        /// Fault injection for the identity check.
        #[arg(long)]
        corrupt_pseudo_inverse: bool,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Variant {
    Persistent,
    Sparse,
}

enum Failure {
    Scenario(String),
    Runtime(String),
    Check,
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Scenario(s) => Failure::Scenario(s.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(cli: &Cli, default: &str) -> Result<Scenario, Failure> {
    let mut sc = match &cli.scenario {
        Some(path) => Scenario::load(path)?,
        None => builtin(default).expect("built-in scenario exists"),
    };
    sc.apply(Overrides {
        seed: cli.seed,
        step: cli.step,
        horizon: cli.horizon,
    })?;
    Ok(sc)
}

fn emit(out: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = write_file(out, name, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn print_summary(prov: &Provenance, entries: &[(String, String)]) -> String {
    let text = summary_text(prov, entries);
    print!("{text}");
    text
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Figure1 => {
            let sc = load(cli, "figure1")?;
            let prov = Provenance::of(&sc);
            let r = run_figure1(&sc)?;
            emit(&cli.out, "figure1_cloud.csv", &cloud_csv(&prov, &r.cloud))?;
            emit(
                &cli.out,
                "figure1_arc.csv",
                &arc_csv(&prov, &r.problem, &r.arc),
            )?;
            emit(&cli.out, "figure1_sweep.csv", &sweep_csv(&prov, &r.sweep))?;
            let text = print_summary(&prov, &r.summary());
            emit(&cli.out, "figure1_summary.txt", &text)?;
        }
        Command::Figure2 { variant } => {
            let sc = load(cli, "figure2")?;
            let prov = Provenance::of(&sc);
            let (v, tag) = match variant {
                Variant::Persistent => (Figure2Variant::Persistent, "persistent"),
                Variant::Sparse => (Figure2Variant::Sparse, "sparse"),
            };
            let r = run_figure2(&sc, v)?;
            emit(
                &cli.out,
                &format!("figure2_{tag}.csv"),
                &arc_csv(&prov, &r.problem, &r.arc),
            )?;
            let text = print_summary(&prov, &r.summary());
            emit(&cli.out, &format!("figure2_{tag}_summary.txt"), &text)?;
        }
        Command::Figure3 => {
            let sc = load(cli, "figure3")?;
            let prov = Provenance::of(&sc);
            let r = run_figure3(&sc)?;
            emit(
                &cli.out,
                "figure3_traces.csv",
                &traces_csv(&prov, &r.traces),
            )?;
            let text = print_summary(&prov, &r.summary());
            emit(&cli.out, "figure3_summary.txt", &text)?;
        }
        Command::Omega => {
            let sc = load(cli, "figure1")?;
            let prov = Provenance::of(&sc);
            let cloud = run_omega(&sc)?;
            emit(&cli.out, "omega_cloud.csv", &cloud_csv(&prov, &cloud))?;
            println!("points = {}\ndiameter = {}", cloud.len(), cloud.diameter());
        }
        Command::ValidateSchedule { file, delta, n0 } => {
            let sc = load(cli, "figure2")?;
            let text = std::fs::read_to_string(file)
                .map_err(|e| Failure::Scenario(format!("{}: {e}", file.display())))?;
            let sched = parse_schedule(
                &text,
                delta.unwrap_or(sc.dwell.delta),
                n0.unwrap_or(sc.dwell.n0),
            )
            .map_err(|e| Failure::Scenario(e.to_string()))?;
            let verdict = sched.validate();
            println!("{}", describe_verdict(&verdict));
            if !verdict.is_valid() {
                return Err(Failure::Check);
            }
        }
        Command::Check {
            corrupt_pseudo_inverse,
        } => {
            let mut opts = CheckOptions {
                corrupt_pseudo_inverse: *corrupt_pseudo_inverse,
                ..CheckOptions::default()
            };
            if let Some(seed) = cli.seed {
                opts.seed = seed;
            }
            if let Some(step) = cli.step {
                opts.step = step;
            }
            let results = run_checks(&opts);
            for r in &results {
                println!("{}", r.line());
            }
            if results.iter().any(|r| !r.passed) {
                return Err(Failure::Check);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(Failure::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_SCENARIO)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
