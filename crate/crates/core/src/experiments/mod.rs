//! Experiment drivers: typed settings read from a [`RunConfig`], pure run
//! functions, and writers for their CSV and text outputs.

pub mod adversarial;
pub mod bounds;
pub mod cartpole;
pub mod dare;
pub mod ev;
pub mod results;

use std::fs;
use std::path::Path;

use crate::adaptive::{AdaptiveConfig, LambdaSource, NumeratorStart};
use crate::config::{RunConfig, ROOT_SECTION};
use crate::error::{Error, Result};

pub use results::{ResultRow, ResultTable, SummaryRow};

/// Name of the file every command writes its effective configuration to.
pub const EFFECTIVE_CONFIG: &str = "config.effective.ini";

/// The subcommands of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SweepTheta,
    StabilityTrace,
    Adversarial,
    EvCompare,
    VerifyBounds,
    Dare,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::SweepTheta => "sweep-theta",
            Command::StabilityTrace => "stability-trace",
            Command::Adversarial => "adversarial",
            Command::EvCompare => "ev-compare",
            Command::VerifyBounds => "verify-bounds",
            Command::Dare => "dare",
        }
    }
}

/// Reads settings, runs one command, writes its files into `out` and returns
/// the text report for the terminal.
pub fn run_command(command: Command, cfg: &RunConfig, out: &Path) -> Result<String> {
    // settings are read up front so config errors surface before any work
    let report = match command {
        Command::SweepTheta => {
            let s = cartpole::SweepSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            cartpole::run_sweep(&s, out)?
        }
        Command::StabilityTrace => {
            let s = cartpole::TraceSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            cartpole::run_trace(&s, out)?
        }
        Command::Adversarial => {
            let s = adversarial::AdversarialSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            adversarial::run_adversarial(&s, out)?
        }
        Command::EvCompare => {
            let s = ev::EvCompareSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            ev::run_ev_compare(&s, out)?
        }
        Command::VerifyBounds => {
            let s = bounds::BoundsSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            bounds::run_verify_bounds(&s, out)?
        }
        Command::Dare => {
            let s = dare::DareSettings::from_config(cfg)?;
            finish_config(cfg, out)?;
            dare::run_dare(&s, out)?
        }
    };
    Ok(report)
}

fn finish_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.reject_unknown()?;
    fs::create_dir_all(out)?;
    fs::write(out.join(EFFECTIVE_CONFIG), cfg.effective())?;
    Ok(())
}

pub(crate) fn create(out: &Path, name: &str) -> Result<fs::File> {
    Ok(fs::File::create(out.join(name))?)
}

/// The `[run] seed` value.
pub fn read_seed(cfg: &RunConfig) -> Result<u64> {
    cfg.get(ROOT_SECTION, "seed", 0u64)
}

/// The `[adaptive]` section with a caller-specific default step size.
pub fn read_adaptive(cfg: &RunConfig, default_alpha: f64, default_start: NumeratorStart) -> Result<AdaptiveConfig> {
    let alpha: f64 = cfg.get("adaptive", "alpha", default_alpha)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("[adaptive] alpha must lie in (0, 1], got {alpha}")));
    }
    let start: NumeratorStart = cfg.get("adaptive", "numerator_start", default_start)?;
    let cap: f64 = cfg.get("adaptive", "decrease_cap", 0.0)?;
    if !(0.0..=1.0).contains(&cap) {
        return Err(Error::Config(format!("[adaptive] decrease_cap must lie in [0, 1], got {cap}")));
    }
    Ok(AdaptiveConfig {
        alpha,
        source: LambdaSource::Learned(start),
        zero_tolerance: 0.0,
        decrease_cap: (cap > 0.0).then_some(cap),
    })
}

pub(crate) fn require(ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(message()))
    }
}

/// A seed for one independent stream, mixed from a base seed and indices.
pub fn stream_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x6a09_e667_f3bc_c908;
    for &p in parts {
        h = splitmix(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    splitmix(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `P(Binomial(n, ½) ≥ wins)`.
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut total = 0.0;
    let mut choose = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            choose = choose * (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            total += choose;
        }
    }
    total / 2f64.powi(n as i32)
}
