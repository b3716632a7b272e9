//! Builds black boxes at several consistency levels and measures ε back by
//! sampling states.
//!
//!     cargo run --example epsilon_consistency

use confident_control::envs::cartpole::{cartpole_linearization, CartPoleParams};
use confident_control::linalg::synthesize;
use confident_control::policy::{ball_sampler, epsilon_consistent_blackbox, lqr_policy, measure_epsilon, BiasMode};

fn main() -> confident_control::Result<()> {
    let p = CartPoleParams::default();
    let syn = synthesize(&cartpole_linearization(&p.model_body(), p.q_weight, p.r_weight))?;
    for mode in [BiasMode::Rotation, BiasMode::Scaling, BiasMode::OffsetGain] {
        for eps in [0.0, 0.1, 1.0] {
            let mut black = epsilon_consistent_blackbox(lqr_policy(&syn), 4, 1, eps, mode, 9);
            let mut sampler = ball_sampler(4, 0.5, 100);
            let report = measure_epsilon(&mut black, &mut lqr_policy(&syn), &mut sampler, 2000, 1, "ball of radius 0.5");
            println!("{mode:?} ε = {eps}: measured {:.6} over {} states", report.epsilon_hat, report.samples);
        }
    }
    Ok(())
}
