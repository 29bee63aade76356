use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use igeb::{cmd_certify, cmd_certify_network, cmd_info, cmd_reconstruct, cmd_simulate, CliError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "igeb", version, about = "Intrinsic beam simulation, frame reconstruction and stability certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, replacing `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Dotted `KEY=VALUE` assignment applied after the file, e.g. `discretization.ne=40`.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March the beam in time and write state and energy series.
    Simulate,
    /// Rebuild centerline and frames from a simulated bundle.
    Reconstruct,
    /// Lyapunov certificate of a single controlled beam.
    Certify,
    /// Nodal certificate of a star or serial network.
    CertifyNetwork,
    /// Wave speeds, transparent feedback and related constants.
    Info,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("IGEB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::config("IGEB_THREADS", format!("expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config("IGEB_THREADS", e.to_string()))
}

fn run(cli: Cli) -> Result<igeb::Outcome, CliError> {
    configure_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    let dir = cfg.output.dir.clone();
    match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &dir),
        Command::Reconstruct => cmd_reconstruct(&cfg, &dir),
        Command::Certify => cmd_certify(&cfg, Some(&dir)),
        Command::CertifyNetwork => cmd_certify_network(&cfg, Some(&dir)),
        Command::Info => cmd_info(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            eprintln!("igeb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
