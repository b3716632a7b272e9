//! Computes the constants of the stability statement for a random plant and
//! checks the exponential envelope on adaptive-policy trajectories.
//!
//!     cargo run --example stability_envelope

use confident_control::experiments::bounds::{bounds_benchmark, envelope_case, BoundsSettings};
use confident_control::guarantees::envelope_eps_limit;

fn main() -> confident_control::Result<()> {
    let (syn, constants, c_limit) = bounds_benchmark(&BoundsSettings::default())?;
    println!("{constants}");
    println!("largest C_ell with a defined envelope: {c_limit:.4e}\n");
    for frac in [0.0, 0.5, 0.9] {
        let c_ell = frac * c_limit;
        let eps = 0.5 * envelope_eps_limit(&syn, c_ell).unwrap_or(0.0);
        let case = envelope_case(&syn, c_ell, eps, 0.01, 11, 200)?;
        println!(
            "C_ell {c_ell:.3e}, ε {eps:.3e}: prefactor {:.3}, γ {:.4}, worst ‖x_t‖/envelope {:.3}, fitted decay {:.4}",
            case.report.predicted_prefactor.unwrap_or(f64::NAN),
            case.constants.gamma,
            case.report.worst_ratio.unwrap_or(f64::NAN),
            case.report.decay_gamma_hat
        );
    }
    Ok(())
}
