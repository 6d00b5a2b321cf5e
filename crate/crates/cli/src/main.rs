use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use timobeam_cli::config::RunConfig;
use timobeam_cli::run::{load_config, run, Command, RunError};

/// Spectral, decay, observability and boundary-control analyses of a
/// Timoshenko beam with one fractional boundary damper.
#[derive(Parser)]
#[command(name = "timobeam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Locate damped eigenvalues seeded by their asymptotic expansions.
    Spectrum(CommonArgs),
    /// Simulate the damped system and fit the energy decay exponent.
    Decay(CommonArgs),
    /// Analyze eigenvalue gaps, chains and the Diophantine regime.
    Gaps(CommonArgs),
    /// Estimate truncated observability constants from Gram systems.
    Observability(CommonArgs),
    /// Synthesize and verify a HUM boundary null control.
    Control(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for CSV/JSON artifacts and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Run the command's acceptance assertions after writing outputs.
    #[arg(long)]
    check: bool,
    /// Worker threads (accepted for compatibility; analyses run
    /// single-threaded, which is already deterministic).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn dispatch(cmd: Command, args: &CommonArgs) -> Result<(), RunError> {
    let cfg: RunConfig = load_config(&args.config)?;
    run(cmd, &cfg, &args.out, args.check)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, args) = match &cli.command {
        Cmd::Spectrum(a) => (Command::Spectrum, a),
        Cmd::Decay(a) => (Command::Decay, a),
        Cmd::Gaps(a) => (Command::Gaps, a),
        Cmd::Observability(a) => (Command::Observability, a),
        Cmd::Control(a) => (Command::Control, a),
    };
    match dispatch(cmd, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("timobeam {}: {e}", cmd.name());
            ExitCode::from(e.exit_code())
        }
    }
}
