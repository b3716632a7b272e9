//! One generated charging day simulated step by step, then the comparison
//! of the biased black box and the adaptive policy over 20 days per profile.
//!
//!     cargo run --release --example ev_charging

use std::sync::Arc;

use confident_control::envs::ev::{ev_environment, generate_sessions, ChargingConfig, DayProfile};
use confident_control::experiments::ev::{ev_compare, EvCompareSettings};
use confident_control::linalg::synthesize;
use confident_control::plant::simulate;
use confident_control::policy::lqr_policy;
use nalgebra::DVector;

fn main() -> confident_control::Result<()> {
    let config = ChargingConfig { r_weight: 0.1, ..ChargingConfig::default() };
    let t = config.steps_per_day();
    let sessions = generate_sessions(1, DayProfile::PostCovid, config.n_chargers, t, 1);
    println!("{} sessions on day 1:", sessions.len());
    for s in &sessions {
        println!("  station {} from step {:>3} to {:>3}, {:.1} kWh", s.station, s.arrival, s.departure, s.energy);
    }
    let env = Arc::new(ev_environment(&config, &sessions, t)?);
    let syn = synthesize(&env.model())?;
    let traj = simulate(&env.model(), &env.residual(), &mut lqr_policy(&syn), &DVector::zeros(config.n_chargers), t);
    println!("LQR reward {:.2}, unmet energy {:.2} kWh\n", env.total_reward(&traj), env.unmet_energy(&traj));

    let cmp = ev_compare(&EvCompareSettings::default())?;
    for p in &cmp.periods {
        println!(
            "{:<9} adaptive {:>9.2}  blackbox {:>9.2}  lqr {:>9.2}  wins {}/{}  p {:.2e}  gap {:+.2}%",
            p.period, p.adaptive_mean, p.blackbox_mean, p.lqr_mean, p.wins, p.runs, p.sign_test_p, 100.0 * p.relative_gap
        );
    }
    Ok(())
}
