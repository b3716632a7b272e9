//! Runs the adaptive policy on a linear plant with a time-only disturbance.
//! The black box knows a scaled copy of the disturbance; the learned
//! confidence tracks how useful that knowledge is.
//!
//!     cargo run --example adaptive_confidence

use confident_control::adaptive::{adaptive_policy, AdaptiveConfig, LambdaSource, NumeratorStart};
use confident_control::guarantees::opt_cost_time_only;
use confident_control::linalg::{synthesize, LinearModel};
use confident_control::plant::{simulate, Disturbance};
use confident_control::policy::{lqr_policy, parameterized_blackbox};
use nalgebra::{DMatrix, DVector};

fn main() -> confident_control::Result<()> {
    let model = LinearModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]),
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2),
        DMatrix::from_element(1, 1, 0.1),
    )?;
    let syn = synthesize(&model)?;
    let horizon = 200;
    let w: Vec<DVector<f64>> = (0..horizon)
        .map(|t| DVector::from_vec(vec![0.0, 0.05 * (t as f64 / 15.0).sin()]))
        .collect();
    let x0 = DVector::from_vec(vec![1.0, 0.0]);
    let opt = opt_cost_time_only(&syn, &w, &x0).value();
    println!("optimal cost {opt:.4}");
    for scale in [1.0, 0.5, 2.0, -1.0] {
        let f_hat: Vec<_> = w.iter().map(|v| v * scale).collect();
        let config = AdaptiveConfig { alpha: 0.002, source: LambdaSource::Learned(NumeratorStart::One), ..Default::default() };
        let mut pol = adaptive_policy(&syn, parameterized_blackbox(&syn, &f_hat), lqr_policy(&syn), config);
        let traj = simulate(&syn.model, &Disturbance::new(2, w.clone()), &mut pol, &x0, horizon);
        let c = pol.confidence()?;
        let black = simulate(&syn.model, &Disturbance::new(2, w.clone()), &mut parameterized_blackbox(&syn, &f_hat), &x0, horizon);
        println!(
            "estimate scale {scale:>4}: λ_50 {:.3}  λ_T {:.3}  adaptive/opt {:.4}  blackbox/opt {:.4}",
            c.lambdas[50],
            c.lambda_limit,
            traj.cost_with_terminal(&syn.p) / opt,
            black.cost_with_terminal(&syn.p) / opt
        );
    }
    Ok(())
}
