use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bwave_core::harness::{
    fit_series_csv, run_experiment, run_suite, Experiment, ExperimentConfig, RunOptions,
};
use clap::{Args, Parser, Subcommand};

/// Traveling waves of scalar balance laws: classification and decay experiments.
#[derive(Debug, Parser)]
#[command(name = "bwave", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the wave and report its stability classification.
    Classify(RunArgs),
    /// Build the wave and write its profile and nondegeneracy report.
    Profile(RunArgs),
    /// Evolve a perturbed wave and compare decay rates with predictions.
    Evolve(RunArgs),
    /// Fit decay rates, either from a config run or from a norms CSV.
    Decay(DecayArgs),
    /// Evolve a planar wave with a curved level set in two dimensions.
    Multid(RunArgs),
    /// Run every config in a directory.
    Suite(SuiteArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evolve waves classified as unstable; results are exploratory.
    #[arg(long)]
    override_unstable: bool,
}

#[derive(Debug, Args)]
struct DecayArgs {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "series", required_unless_present = "series")]
    config: Option<PathBuf>,
    /// Norms CSV with columns `t,norm,weight`.
    #[arg(long)]
    series: Option<PathBuf>,
    /// Fit window `START,END`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    window: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    override_unstable: bool,
}

#[derive(Debug, Args)]
struct SuiteArgs {
    /// Directory of experiment configs.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    override_unstable: bool,
}

fn run_one(args: &RunArgs, experiment: Experiment) -> Result<bool> {
    let cfg = ExperimentConfig::load(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let opts = RunOptions {
        out: args.out.clone(),
        override_unstable: args.override_unstable,
    };
    let summary = run_experiment(&cfg, experiment, &opts)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(summary.passed)
}

fn decay(args: &DecayArgs) -> Result<bool> {
    if let Some(config) = &args.config {
        let run = RunArgs {
            config: config.clone(),
            out: args.out.clone(),
            override_unstable: args.override_unstable,
        };
        return run_one(&run, Experiment::Decay);
    }
    let Some(series) = &args.series else {
        bail!("decay needs --config or --series")
    };
    let window = args.window.as_ref().map(|w| (w[0], w[1]));
    let report = fit_series_csv(series, window)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("decay.json"), format!("{json}\n"))?;
    }
    println!("{json}");
    Ok(true)
}

fn suite(args: &SuiteArgs) -> Result<bool> {
    let summary = run_suite(&args.config, &args.out, args.jobs, args.override_unstable)?;
    for e in &summary.entries {
        let status = if e.passed { "PASS" } else { "FAIL" };
        match &e.error {
            Some(err) => println!("{status} {}: {err}", e.file),
            None => println!("{status} {}", e.file),
        }
    }
    Ok(summary.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(a) => run_one(a, Experiment::Classify),
        Command::Profile(a) => run_one(a, Experiment::Profile),
        Command::Evolve(a) => run_one(a, Experiment::Evolve),
        Command::Decay(a) => decay(a),
        Command::Multid(a) => run_one(a, Experiment::Multid),
        Command::Suite(a) => suite(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
