use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use waveplate::cli::{self, RunConfig};
use waveplate::error::Result;

/// Numerical laboratory for a damped nonlinear wave equation coupled to a
/// clamped plate: potential-well classification, energy ledgers, and decay
/// rate measurement.
#[derive(Parser)]
#[command(name = "waveplate", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the CSV/JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted-path config overrides, e.g. --override time.t_end=5.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config against every model assumption; exit 2 on violation.
    Validate(CommonArgs),
    /// Compute the well constants and classify the configured initial datum.
    Well(CommonArgs),
    /// Run the coupled simulation; emits ledger.csv and report.json.
    Simulate(CommonArgs),
    /// Fit the decay branch of a run and check the stabilization estimate.
    Decay(CommonArgs),
    /// Run the decay pipeline across several values of one config key.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// key=v1,v2,... applied one value per run.
        #[arg(long)]
        vary: String,
    },
}

fn load_config(args: &CommonArgs) -> Result<(String, RunConfig)> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        waveplate::Error::Config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let text = cli::apply_overrides(&text, &overrides)?;
    let cfg = cli::parse_config(&text)?;
    Ok((text, cfg))
}

fn run() -> Result<u8> {
    let parsed = Cli::parse();
    match parsed.command {
        Command::Validate(args) => {
            let (_, cfg) = load_config(&args)?;
            let summary = cli::run_validate(&cfg);
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if summary.ok { 0 } else { 2 })
        }
        Command::Well(args) => {
            let (_, cfg) = load_config(&args)?;
            let report = cli::run_well(&cfg, args.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Simulate(args) => {
            let (_, cfg) = load_config(&args)?;
            let outcome = cli::run_simulate(&cfg, args.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
            match &outcome.report.aborted {
                Some(info) => {
                    eprintln!(
                        "instability: {} (last good t = {})",
                        info.reason, info.t_last_good
                    );
                    Ok(3)
                }
                None => Ok(0),
            }
        }
        Command::Decay(args) => {
            let (_, cfg) = load_config(&args)?;
            let outcome = cli::run_decay(&cfg, args.out.as_deref())?;
            println!("{}", serde_json::to_string_pretty(&outcome.report)?);
            match &outcome.report.simulate.aborted {
                Some(info) => {
                    eprintln!(
                        "instability: {} (last good t = {})",
                        info.reason, info.t_last_good
                    );
                    Ok(3)
                }
                None => Ok(0),
            }
        }
        Command::Sweep { common, vary } => {
            let (text, _) = load_config(&common)?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("sweep"));
            let index = cli::run_sweep(&text, &out, &vary)?;
            println!("{}", serde_json::to_string_pretty(&index)?);
            Ok(if index.entries.iter().all(|e| e.ok) {
                0
            } else {
                1
            })
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
