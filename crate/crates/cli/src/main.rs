use clap::{Parser, Subcommand};
use ospc_cli::{commands, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ospc", version, about = "OSPC ATE posteriors: experiments and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Write synthetic datasets and oracle sidecars.
    Generate,
    /// Estimate the ATE on every replicate.
    Estimate,
    /// PIT/KS and TV calibration over replicates.
    CalibrationStudy,
    /// Confounding degree over datasets drawn from the DGP.
    PriorBias,
    /// Check an external PPD client against the protocol.
    ProtocolCheck,
}

fn run(cli: Cli) -> anyhow::Result<Vec<String>> {
    let path = cli.config.ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    cfg.validate()?;
    let outcome = match cli.command {
        Command::Generate => commands::cmd_generate(&cfg)?,
        Command::Estimate => commands::cmd_estimate(&cfg)?,
        Command::CalibrationStudy => commands::cmd_calibration_study(&cfg)?,
        Command::PriorBias => commands::cmd_prior_bias(&cfg)?,
        Command::ProtocolCheck => commands::cmd_protocol_check(&cfg)?,
    };
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{} failure(s):", failures.len());
            for f in failures {
                eprintln!("  {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
