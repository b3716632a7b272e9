//! Two gains that each stabilize the same plant, whose fixed convex blend
//! does not.
//!
//!     cargo run --example adversarial_blend

use confident_control::experiments::adversarial::{adversarial_demo, AdversarialSettings};

fn main() -> confident_control::Result<()> {
    for (n, lambda) in [(2, 0.5), (3, 0.2), (4, 0.8)] {
        let run = adversarial_demo(&AdversarialSettings { n, lambda, beta: 0.5, horizon: 80, seed: n as u64 })?;
        let c = &run.certificate;
        println!(
            "n = {n}, λ = {lambda}: ρ(F1) {:.3}  ρ(F2) {:.3}  ρ(blend) {:.3}  ({})  ‖x_T‖ blend {:.2e}, K2 alone {:.2e}",
            c.rho_f1,
            c.rho_f2,
            c.rho_combined,
            c.construction_case.as_str(),
            run.combined.final_state().norm(),
            run.second_alone.final_state().norm()
        );
    }
    println!("\n{}", adversarial_demo(&AdversarialSettings::default())?.certificate);
    Ok(())
}
