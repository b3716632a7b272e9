//! Compares the confidence learned from observed states and actions with the
//! value computed from the true residuals.
//!
//!     cargo run --example learned_lambda

use confident_control::adaptive::{learn_lambda_prime, optimal_lambda, ObservationLog, NumeratorStart};
use confident_control::linalg::{synthesize, LinearModel};
use confident_control::plant::{simulate, Disturbance};
use confident_control::policy::{parameterized_blackbox, Policy};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn main() -> confident_control::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 3;
    let a = DMatrix::from_fn(n, n, |_, _| 0.4 * normal(&mut rng));
    let b = DMatrix::from_fn(n, 2, |_, _| normal(&mut rng));
    let syn = synthesize(&LinearModel::new(a, b, DMatrix::identity(n, n), DMatrix::identity(2, 2))?)?;
    let horizon = 100;
    let f_star: Vec<DVector<f64>> = (0..horizon).map(|_| DVector::from_fn(n, |_, _| normal(&mut rng))).collect();
    let f_hat: Vec<DVector<f64>> = f_star.iter().map(|f| f * 0.6 + DVector::from_fn(n, |_, _| 0.3 * normal(&mut rng))).collect();

    // the black box drives the plant; its own suggestions are the actions taken
    let mut black = parameterized_blackbox(&syn, &f_hat);
    let x0 = DVector::from_element(n, 1.0);
    let traj = simulate(&syn.model, &Disturbance::new(n, f_star.clone()), &mut black, &x0, horizon);
    let mut log = ObservationLog::default();
    for t in 0..=horizon {
        log.states.push(traj.states[t].clone());
        if t > 0 && t % 20 == 0 {
            let learned = learn_lambda_prime(&syn, &log, NumeratorStart::Zero)?;
            let known = optimal_lambda(&syn, &f_star[..t], &f_hat[..t], t - 1);
            println!("t = {t:>3}: learned {learned:.6}  from true residuals {known:.6}");
        }
        if t < horizon {
            let u = black.act(t, &traj.states[t]);
            log.blackbox_actions.push(u.clone());
            log.actions.push(u);
        }
    }
    Ok(())
}
