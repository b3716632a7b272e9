//! Solves the Riccati equation for a scalar plant and for the cart-pole's
//! crude linearization, then prints the gain and the decay constants.
//!
//!     cargo run --example riccati_synthesis

use confident_control::envs::cartpole::{cartpole_linearization, CartPoleParams};
use confident_control::experiments::dare::format_synthesis;
use confident_control::linalg::{synthesize, LinearModel};
use nalgebra::DMatrix;

fn main() -> confident_control::Result<()> {
    let one = DMatrix::from_element(1, 1, 1.0);
    let scalar = synthesize(&LinearModel::new(one.clone(), one.clone(), one.clone(), one)?)?;
    println!("a = b = q = r = 1: p = {:.12} (golden ratio {:.12})", scalar.p[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0);

    let params = CartPoleParams::default();
    let model = cartpole_linearization(&params.model_body(), params.q_weight, params.r_weight);
    println!("\ncart-pole, model masses {} / {}, half-length {}", params.model_m, params.model_cart, params.model_l);
    print!("{}", format_synthesis(&synthesize(&model)?));
    Ok(())
}
