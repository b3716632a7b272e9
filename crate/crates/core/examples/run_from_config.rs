//! Runs an experiment the way the command-line tool does: from a config
//! text, into an output directory holding the CSVs and the effective config.
//!
//!     cargo run --example run_from_config -- [OUT_DIR]

use confident_control::config::RunConfig;
use confident_control::experiments::{run_command, Command, EFFECTIVE_CONFIG};

const CONFIG: &str = "
seed = 5

[adaptive]
alpha = 0.002

[trace]
theta = 0.4
horizon = 200
policies = lqr, adaptive, naive-flipped, adaptive-flipped
";

fn main() -> confident_control::Result<()> {
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("confident-trace"));
    let cfg = RunConfig::parse(CONFIG)?;
    print!("{}", run_command(Command::StabilityTrace, &cfg, &out)?);
    println!("\nwrote {}:", out.display());
    print!("{}", std::fs::read_to_string(out.join(EFFECTIVE_CONFIG))?);
    Ok(())
}
