//! `zeroday`: benign-only intrusion detectors from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{ConfigErrors, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "zeroday",
    version,
    about = "Zero-day intrusion detection trained on benign traffic only"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the config's global seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode, split, prune and scale; writes the pipeline and benign matrices.
    Preprocess,
    /// Train the autoencoder on the benign training matrix.
    TrainAe,
    /// Train one one-class SVM per sweep value of nu.
    TrainSvm,
    /// Sweep the trained detector over the hold-out (and test) data.
    Evaluate,
    /// Random search over autoencoder settings.
    Search,
    /// Compare two reports at one sweep value each.
    Compare {
        /// First report (.csv, .json or .md).
        #[arg(long)]
        a: PathBuf,
        /// Second report.
        #[arg(long)]
        b: PathBuf,
        /// Sweep value taken from the first report.
        #[arg(long)]
        t: f64,
        /// Sweep value taken from the second report.
        #[arg(long)]
        v: f64,
    },
    /// Generate a synthetic labelled dataset.
    Synth,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| ConfigErrors(vec!["--config PATH is required for this command".into()]))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(ConfigErrors(vec!["--threads must be at least 1".into()]).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Preprocess => commands::preprocess(&load_config(cli)?),
        Command::TrainAe => commands::train_autoencoder(&load_config(cli)?),
        Command::TrainSvm => commands::train_svm(&load_config(cli)?),
        Command::Evaluate => commands::evaluate(&load_config(cli)?),
        Command::Search => commands::search(&load_config(cli)?),
        Command::Synth => commands::synth(&load_config(cli)?).map(|_| ()),
        Command::Compare { a, b, t, v } => {
            let out = match (&cli.out, &cli.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => load_config(cli)?.out_dir.ok_or_else(|| {
                    ConfigErrors(vec!["out_dir is not set (config key or --out)".into()])
                })?,
                (None, None) => {
                    return Err(ConfigErrors(vec![
                        "compare needs --out DIR or --config PATH".into()
                    ])
                    .into())
                }
            };
            commands::compare_reports(&out, a, b, *t, *v)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    use zeroday_core::Error as E;
    for cause in e.chain() {
        if cause.is::<ConfigErrors>() {
            return EXIT_CONFIG;
        }
        if let Some(err) = cause.downcast_ref::<E>() {
            return match err {
                E::InvalidParameter(_) => EXIT_CONFIG,
                E::NonConvergence { .. } | E::Numeric(_) => EXIT_NUMERIC,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
