//! Cart-pole costs over initial angles for LQR, a good black box, a
//! destabilizing one, their fixed blends and the adaptive policy.
//!
//!     cargo run --release --example cartpole_sweep

use confident_control::experiments::cartpole::{sweep_theta, SweepSettings};

fn main() -> confident_control::Result<()> {
    let settings = SweepSettings { seed: 42, ..SweepSettings::default() };
    let table = sweep_theta(&settings)?;
    println!("{:<10} {:<18} {:>12} {:>9}", "angle", "policy", "mean cost", "diverged");
    for s in table.summarize() {
        println!("{:<10} {:<18} {:>12.3} {:>6}/{}", s.point, s.policy, s.mean, s.diverged, s.runs);
    }
    Ok(())
}
