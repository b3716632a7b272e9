//! Hindsight-optimal cost of the nonlinear cart-pole by trajectory
//! optimization, against the LQR rollout it starts from.
//!
//!     cargo run --release --example hindsight_optimum

use confident_control::envs::cartpole::{cartpole_residual, initial_state, CartPoleParams};
use confident_control::guarantees::{opt_cost_trajopt, TrajoptOptions};
use confident_control::linalg::synthesize;

fn main() -> confident_control::Result<()> {
    let params = CartPoleParams::default();
    let (model, residual) = cartpole_residual(&params);
    let syn = synthesize(&model)?;
    let opts = TrajoptOptions { action_bound: Some(params.f_mag), ..TrajoptOptions::default() };
    for theta in [0.05, 0.1] {
        let r = opt_cost_trajopt(&syn, &residual, &initial_state(theta), 100, opts);
        println!(
            "θ = {theta}: start {:.4} → optimized {:.4} in {} iterations (converged {})",
            r.initial_cost, r.cost, r.iterations, r.converged
        );
    }
    Ok(())
}
