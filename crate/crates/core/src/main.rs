use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use confident_control::config::{RunConfig, ROOT_SECTION};
use confident_control::experiments::{run_command, Command};
use confident_control::Error;

/// Experiments blending a black-box controller with LQR advice.
#[derive(Parser)]
#[command(name = "confident", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides `[run] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Cart-pole cost over a grid of initial angles.
    SweepTheta,
    /// Per-step state norm and confidence from one initial angle.
    StabilityTrace,
    /// Two stabilizing gains whose fixed blend is unstable.
    Adversarial,
    /// Biased black box versus adaptive on charging days.
    EvCompare,
    /// Envelope and ratio checks over a grid of residual sizes.
    VerifyBounds,
    /// Riccati solution and decay constants.
    Dare,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SweepTheta => Command::SweepTheta,
            Cmd::StabilityTrace => Command::StabilityTrace,
            Cmd::Adversarial => Command::Adversarial,
            Cmd::EvCompare => Command::EvCompare,
            Cmd::VerifyBounds => Command::VerifyBounds,
            Cmd::Dare => Command::Dare,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Validation(_)
        | Error::SessionConflict { .. }
        | Error::Dimension(_)
        | Error::InvalidModel(_) => 2,
        Error::PreconditionViolated(_) | Error::NotApplicable(_) | Error::NonStabilizable { .. } | Error::SingularB => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = (|| {
        let mut cfg = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.set(ROOT_SECTION, "seed", seed);
        }
        run_command(cli.command.into(), &cfg, &cli.out)
    })();
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
