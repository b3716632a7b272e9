//! Builds a destabilizing second gain for a random LQR gain and simulates it.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{create, read_seed, require};
use crate::adversarial::{construct_adversarial_k2, demonstrate_instability, AdversarialCertificate};
use crate::config::RunConfig;
use crate::error::Result;
use crate::linalg::{synthesize, LinearModel};
use crate::plant::{csv_err, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialSettings {
    pub n: usize,
    pub lambda: f64,
    pub beta: f64,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for AdversarialSettings {
    fn default() -> Self {
        Self { n: 3, lambda: 0.5, beta: 0.5, horizon: 60, seed: 0 }
    }
}

impl AdversarialSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let s = "adversarial";
        let out = Self {
            n: cfg.get(s, "n", d.n)?,
            lambda: cfg.get(s, "lambda", d.lambda)?,
            beta: cfg.get(s, "beta", d.beta)?,
            horizon: cfg.get(s, "horizon", d.horizon)?,
            seed: read_seed(cfg)?,
        };
        require(out.n >= 2, || "[adversarial] n must be at least 2".into())?;
        require(out.horizon >= 1, || "[adversarial] horizon must be at least 1".into())?;
        Ok(out)
    }
}

/// Random `A`, random square `B` (full rank with probability one), `Q = R = I`.
pub fn random_square_model(n: usize, rng: &mut ChaCha8Rng) -> Result<LinearModel> {
    let mut gauss = || DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(&mut *rng));
    let a = gauss();
    let b = gauss();
    LinearModel::new(a, b, DMatrix::identity(n, n), DMatrix::identity(n, n))
}

pub struct AdversarialRun {
    pub certificate: AdversarialCertificate,
    pub combined: Trajectory,
    pub second_alone: Trajectory,
}

/// `K₁` is LQR on a random system; `K₂` is constructed against it.
pub fn adversarial_demo(s: &AdversarialSettings) -> Result<AdversarialRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let model = random_square_model(s.n, &mut rng)?;
    let k1 = synthesize(&model)?.k;
    let certificate = construct_adversarial_k2(&model, &k1, s.lambda, s.beta)?;
    let x0 = DVector::from_element(s.n, 1.0 / (s.n as f64).sqrt());
    let (combined, second_alone) = demonstrate_instability(&certificate, &x0, s.horizon);
    Ok(AdversarialRun { certificate, combined, second_alone })
}

pub fn write_trajectories_csv<W: Write>(run: &AdversarialRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = run.certificate.model.state_dim();
    let mut header = vec!["policy".to_string(), "t".into(), "state_norm".into()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (label, traj) in [("combined", &run.combined), ("k2", &run.second_alone)] {
        for (t, x) in traj.states.iter().enumerate() {
            let mut row = vec![label.to_string(), t.to_string(), x.norm().to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run_adversarial(s: &AdversarialSettings, out: &Path) -> Result<String> {
    let run = adversarial_demo(s)?;
    let cert = run.certificate.to_string();
    std::fs::write(out.join("certificate.txt"), format!("{cert}\n"))?;
    write_trajectories_csv(&run, create(out, "trajectories.csv")?)?;
    let mut text = cert;
    let _ = write!(
        text,
        "\n‖x_T‖ combined {:.4e}, K2 alone {:.4e} after {} steps\n",
        run.combined.final_state().norm(),
        run.second_alone.final_state().norm(),
        run.combined.horizon()
    );
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_blends_two_stable_gains_into_an_unstable_one() {
        let run = adversarial_demo(&AdversarialSettings { horizon: 200, ..AdversarialSettings::default() }).unwrap();
        assert!(run.certificate.is_valid());
        assert!(run.combined.final_state().norm() > 1e3 || run.combined.diverged);
        assert!(run.second_alone.final_state().norm() < 1e-3);
    }
}
