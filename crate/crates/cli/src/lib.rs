//! Command-line front end: `lyapgauge <command> [--config PATH] [--seed N]
//! [--out DIR] [--tol T]`.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::VerifyRequest;
use crate::config::Overrides;
pub use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lyapgauge", version, about = "Lyapunov spectra and their gauge derivatives for SL(d) cocycles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-point and mean spectra, gap table and flag type.
    Spectrum(Common),
    /// Attractor and repeller sections with residual histories.
    Section(Common),
    /// Analytic differential against finite differences, plus a scan.
    Derivative(Common),
    /// Gap predictions for a semigroup-valued cocycle.
    Semigroup(Common),
    /// The acceptance criteria.
    Verify(Verify),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the section solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct Verify {
    /// Suite configuration (JSON); missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the section residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Criterion ids to run (comma separated); all when omitted.
    #[arg(long, value_delimiter = ',')]
    criterion: Vec<u8>,
}

fn dispatch(cmd: Command) -> Result<Vec<PathBuf>, CliError> {
    let (common, which) = match cmd {
        Command::Verify(v) => {
            return commands::verify(&VerifyRequest {
                config: v.config,
                seed: v.seed,
                tol: v.tol,
                out: v.out,
                criteria: v.criterion,
            })
        }
        Command::Spectrum(c) => (c, commands::spectrum as fn(&_) -> _),
        Command::Section(c) => (c, commands::section as fn(&_) -> _),
        Command::Derivative(c) => (c, commands::derivative as fn(&_) -> _),
        Command::Semigroup(c) => (c, commands::semigroup as fn(&_) -> _),
    };
    let ov = Overrides {
        seed: common.seed,
        out: common.out,
        tol: common.tol,
    };
    let resolved = config::resolve(config::load(&common.config, &ov)?)?;
    which(&resolved)
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(lyapgauge::Error::NoConvergence { history, .. }) = &e {
                let tail: Vec<String> = history.iter().rev().take(5).rev().map(|v| format!("{v:.3e}")).collect();
                eprintln!("last residuals: {}", tail.join(", "));
            }
            e.exit_code()
        }
    }
}
