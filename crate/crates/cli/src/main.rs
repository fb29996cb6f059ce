use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stochcbf_core::estimation::{estimate_c1, IncrementSeries};
use stochcbf_core::harness::{
    audit_record, builtin_scenario, run_campaign, write_campaign, Campaign, BUILTIN_NAMES,
};
use stochcbf_core::{ControllerMode, Error, Feedback, PsiForm, Scenario, SimulationMode};

#[derive(Parser)]
#[command(
    name = "stochcbf",
    version,
    about = "Stochastic barrier collision avoidance simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo campaign.
    Run(RunArgs),
    /// Estimate the distance diffusion coefficient from a `t,x1,v` log.
    EstimateC1 {
        #[arg(long)]
        input: PathBuf,
        /// Sampling interval, s. Inferred from the time column when omitted.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Write a builtin scenario as TOML.
    ExportScenario {
        #[arg(long)]
        name: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check the generator inequality on exported records.
    Audit {
        /// Record files or directories holding `trial_NNNN.csv` files.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Builtin name (exp1d, exp1n, exp2d, exp2n) or a scenario TOML file.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; trial i uses `seed ^ i`.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    controller: Option<ControllerArg>,
    #[arg(long, value_enum)]
    psi_form: Option<PsiFormArg>,
    #[arg(long, value_enum)]
    feedback: Option<FeedbackArg>,
    /// Directory for the per-trial CSV files and the summary.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 1 unless every trial stays safe.
    #[arg(long)]
    assert_safe: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PointCloud,
    Pose,
}

#[derive(Clone, Copy, ValueEnum)]
enum ControllerArg {
    Deterministic,
    Stochastic,
}

#[derive(Clone, Copy, ValueEnum)]
enum PsiFormArg {
    FullCancel,
    Projection,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeedbackArg {
    Held,
    Continuous,
    Implicit,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Unsafe(String),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::EstimateC1 { input, dt } => estimate(&input, dt),
        Command::ExportScenario { name, out } => export_scenario(&name, out.as_deref()),
        Command::Audit { paths } => audit(&paths),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unsafe(msg)) => {
            eprintln!("stochcbf: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("stochcbf: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_scenario(spec: &str) -> Result<Scenario, Failure> {
    if BUILTIN_NAMES.contains(&spec) {
        return Ok(builtin_scenario(spec)?);
    }
    let path = Path::new(spec);
    if path.exists() {
        return Ok(Scenario::load(path)?);
    }
    Err(Failure::Config(format!(
        "`{spec}` is neither a builtin ({}) nor a scenario file",
        BUILTIN_NAMES.join(", ")
    )))
}

fn configure(args: &RunArgs) -> Result<Scenario, Failure> {
    let mut s = load_scenario(&args.scenario)?;
    if let Some(n) = args.trials {
        s.trials = n;
    }
    if let Some(seed) = args.seed {
        s.sde.seed = seed;
    }
    if let Some(mode) = args.mode {
        s.mode = match mode {
            ModeArg::PointCloud => SimulationMode::PointCloud,
            ModeArg::Pose => SimulationMode::Pose,
        };
    }
    if let Some(c) = args.controller {
        s.controller.mode = match c {
            ControllerArg::Deterministic => ControllerMode::Deterministic,
            ControllerArg::Stochastic => ControllerMode::Stochastic,
        };
    }
    if let Some(form) = args.psi_form {
        s.controller.psi_form = match form {
            PsiFormArg::FullCancel => PsiForm::FullCancel,
            PsiFormArg::Projection => PsiForm::Projection,
        };
    }
    if let Some(f) = args.feedback {
        s.sde.feedback = match f {
            FeedbackArg::Held => Feedback::Held,
            FeedbackArg::Continuous => Feedback::Continuous,
            FeedbackArg::Implicit => Feedback::Implicit,
        };
    }
    s.validate()?;
    // an inadmissible start fails every trial the same way
    s.initial_scan()
        .and_then(|scan| {
            scan.min_margin(&s.vehicle)
                .map(|_| ())
                .ok_or_else(|| Error::InvalidParams("the initial scan is empty".into()))
        })
        .map_err(|e| Error::InvalidInitialState(Box::new(e)))?;
    Ok(s)
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let scenario = configure(&args)?;
    let start = Instant::now();
    let campaign = run_campaign(&scenario);
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(Err(e @ Error::InvalidInitialState(_))) = campaign.results.first() {
        return Err(Failure::Config(e.to_string()));
    }
    if let Some(dir) = &args.out {
        write_campaign(&campaign, dir)?;
    }
    print_summary(&scenario, &campaign, elapsed);
    let s = &campaign.summary;
    if args.assert_safe && s.n_safe < s.n_trials {
        return Err(Failure::Unsafe(format!(
            "{} of {} trials breached, {} errored",
            s.n_breached, s.n_trials, s.n_errors
        )));
    }
    Ok(())
}

fn print_summary(scenario: &Scenario, campaign: &Campaign, elapsed: f64) {
    let s = &campaign.summary;
    println!("scenario            {}", scenario.name);
    println!("trials              {}", s.n_trials);
    println!("safe                {}", s.n_safe);
    println!(
        "breached            {} ({:.2})",
        s.n_breached,
        s.breach_fraction()
    );
    println!("errors              {}", s.n_errors);
    println!("min margin [m]      {:.6e}", s.min_margin_over_all);
    println!("max B [1/m]         {:.6e}", s.b_max);
    println!("mean chatter        {:.4}", s.mean_chatter);
    println!("max gen. excess     {:.3e}", s.max_generator_excess);
    let near: Vec<f64> = campaign
        .results
        .iter()
        .flatten()
        .filter_map(|r| r.flips_near_side(0.3))
        .collect();
    if !near.is_empty() {
        let mean = near.iter().sum::<f64>() / near.len() as f64;
        println!(
            "flips near -pi/2    {mean:.2} (mean over {} trials)",
            near.len()
        );
    }
    println!("wall time [s]       {elapsed:.2}");
    for (i, r) in campaign.results.iter().enumerate() {
        if let Err(e) = r {
            println!("trial {i}: {e}");
        }
    }
}

fn estimate(input: &Path, dt: Option<f64>) -> Result<(), Failure> {
    let series = IncrementSeries::from_csv(input, dt)?;
    let c1 = estimate_c1(&series)?;
    println!("{c1}");
    Ok(())
}

fn export_scenario(name: &str, out: Option<&Path>) -> Result<(), Failure> {
    let scenario = builtin_scenario(name)?;
    match out {
        Some(path) => scenario.save(path)?,
        None => print!("{}", scenario.to_toml_string()),
    }
    Ok(())
}

fn record_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries =
        std::fs::read_dir(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("trial_") && name.ends_with(".csv") && !name.ends_with("_audit.csv")
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Config(format!(
            "{}: no trial records",
            path.display()
        )));
    }
    Ok(files)
}

fn audit(paths: &[PathBuf]) -> Result<(), Failure> {
    let mut failed = 0;
    let mut total = 0;
    for path in paths {
        for file in record_files(path)? {
            let report = audit_record(&file)?;
            total += 1;
            let verdict = if report.passed() { "ok" } else { "FAIL" };
            println!(
                "{verdict:4} {}: {} rows, {} violations, {} mismatched inputs, max excess {:.3e}",
                file.display(),
                report.rows_checked,
                report.violations.len(),
                report.mismatched,
                report.max_excess
            );
            if !report.passed() {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Unsafe(format!(
            "{failed} of {total} records fail the audit"
        )));
    }
    Ok(())
}
