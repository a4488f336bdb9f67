//! Command-line runner: profile datasets, tune hyperparameters, sweep the
//! learning rate, or re-aggregate existing trial logs.
//!
//! Exit codes: 0 success, 1 partial failure (some datasets failed), 2
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tunebench_core::config::ExperimentConfig;
use tunebench_core::experiment::{run_profile, run_report, run_sweep_lr, run_tune};
use tunebench_core::Error;

#[derive(Parser)]
#[command(name = "tunebench", version, about = "Hyperparameter tuning benchmark for desk-scale deep learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker-pool width for independent trials.
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    /// Override the config's search strategy (grid, random, nelder_mead, lr_sweep).
    #[arg(long, value_name = "NAME")]
    strategy: Option<String>,
    /// Override the config's output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Profile datasets: sparsity table and per-dataset class summaries.
    Profile(ConfigArgs),
    /// Run the configured search over every (dataset, model) pair.
    Tune(ConfigArgs),
    /// Learning-rate sweep with cross-validated means per model.
    SweepLr(ConfigArgs),
    /// Merge trial logs and recompute the report artifacts.
    Report {
        /// trials.csv files to merge.
        #[arg(required = true, value_name = "LOG")]
        logs: Vec<PathBuf>,
        /// Output directory for the consolidated artifacts.
        #[arg(long, value_name = "DIR", default_value = "report")]
        out: PathBuf,
    },
}

/// Any failure while loading or validating the config is a config error
/// (exit code 2), whatever its underlying kind.
fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let build = || -> Result<ExperimentConfig, Error> {
        let mut config = ExperimentConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(jobs) = args.jobs {
            config.output.jobs = jobs;
        }
        if let Some(strategy) = &args.strategy {
            config.strategy.kind = strategy.clone();
        }
        if let Some(out) = &args.out {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    };
    build().map_err(|e| match e {
        Error::InvalidConfig(_) => e,
        other => Error::InvalidConfig(format!("{}: {other}", args.config.display())),
    })
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidConfig(_) | Error::Toml(_))
}

fn report_failures(failures: &[(String, String)]) {
    for (dataset, error) in failures {
        eprintln!("tunebench: dataset {dataset}: {error}");
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Profile(args) => {
            let config = load_config(&args)?;
            let outcome = run_profile(&config)?;
            for p in &outcome.profiles {
                println!(
                    "{}: {} instances x {} features, sparsity {:.9}, uniformity {:.4}",
                    p.name,
                    p.profile.n_instances,
                    p.profile.n_features,
                    p.profile.sparsity,
                    p.profile.class_uniformity
                );
            }
            report_failures(&outcome.failures);
            println!("wrote {}", outcome.out_dir.join("sparsity.csv").display());
            Ok(outcome.failures.is_empty())
        }
        Command::Tune(args) => {
            let config = load_config(&args)?;
            let outcome = run_tune(&config)?;
            println!(
                "{} trials across {} dataset(s); artifacts in {}",
                outcome.records.len(),
                config.datasets.len(),
                outcome.out_dir.display()
            );
            report_failures(&outcome.failures);
            Ok(outcome.failures.is_empty())
        }
        Command::SweepLr(args) => {
            let config = load_config(&args)?;
            let outcome = run_sweep_lr(&config)?;
            for (model, curve) in &outcome.curves {
                println!("{model}: {} sweep points", curve.len());
            }
            report_failures(&outcome.failures);
            println!("artifacts in {}", outcome.out_dir.display());
            Ok(outcome.failures.is_empty())
        }
        Command::Report { logs, out } => {
            let outcome = run_report(&logs, &out)?;
            println!(
                "merged {} rows from {} log(s) into {}",
                outcome.records.len(),
                logs.len(),
                outcome.out_dir.display()
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("tunebench: {e}");
            if is_config_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
