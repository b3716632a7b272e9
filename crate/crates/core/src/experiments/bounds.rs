//! Grids over (C_ℓ, ε, α) checking the stability envelope and the
//! competitive-ratio bound of the adaptive policy on synthetic systems.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{create, read_seed, require, stream_seed};
use crate::adaptive::{adaptive_policy, AdaptiveConfig, LambdaSource, NumeratorStart};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::guarantees::{
    competitive_ratio, envelope_c_ell_limit, envelope_eps_limit, fit_stability_envelope, opt_cost_time_only, theorem_constants, verify_bounds, BoundCalibration,
    CompetitiveReport, OptMethod, StabilityReport, TheoremConstants,
};
use crate::linalg::{spectral_radius, synthesize, LinearModel, Synthesis};
use crate::plant::{ball_point, csv_err, simulate, Disturbance, LinearResidual};
use crate::policy::{auxiliary_optimal_policy, epsilon_consistent_blackbox, lqr_policy, BiasMode, LinearFeedback};

/// A random `(A, B)` with `Q = I`, `R = I`, `ρ(A) = 1.05` so LQR has work to do.
pub fn benchmark_model(n: usize, m: usize, seed: u64) -> Result<LinearModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = |r, c| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let raw = gauss(n, n);
    let rho = spectral_radius(&raw);
    let a = if rho > 0.0 { raw * (1.05 / rho) } else { DMatrix::identity(n, n) * 1.05 };
    let b = gauss(n, m) / (n as f64).sqrt();
    LinearModel::new(a, b, DMatrix::identity(n, n), DMatrix::identity(m, m))
}

fn adaptive_config(alpha: f64) -> AdaptiveConfig {
    AdaptiveConfig { alpha, source: LambdaSource::Learned(NumeratorStart::Zero), ..AdaptiveConfig::default() }
}

#[derive(Debug, Clone)]
pub struct EnvelopeCase {
    pub constants: TheoremConstants,
    pub report: StabilityReport,
    pub lambda_limit: f64,
}

/// The adaptive policy on the plant `(A + E, B + G)` with `‖[E G]‖ = C_ℓ`.
///
/// The black box is ε-consistent with LQR synthesized on the true plant,
/// which is the optimal policy for a linear residual.
pub fn envelope_case(syn: &Synthesis, c_ell: f64, epsilon: f64, alpha: f64, seed: u64, horizon: usize) -> Result<EnvelopeCase> {
    let (n, m) = (syn.model.state_dim(), syn.model.input_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let residual = LinearResidual::random(n, m, c_ell, &mut rng);
    let truth = LinearModel::new(&syn.model.a + &residual.e, &syn.model.b + &residual.g, syn.model.q.clone(), syn.model.r.clone())?;
    let optimal = LinearFeedback::new(synthesize(&truth)?.k, "true-lqr");
    let black = epsilon_consistent_blackbox(optimal, n, m, epsilon, BiasMode::Rotation, seed);
    let mut pol = adaptive_policy(syn, black, lqr_policy(syn), adaptive_config(alpha));
    let x0 = unit_state(n, &mut rng);
    let traj = simulate(&syn.model, &residual, &mut pol, &x0, horizon);
    let constants = theorem_constants(syn, c_ell, epsilon);
    let report = fit_stability_envelope(&traj.states, Some(&constants))?;
    Ok(EnvelopeCase { constants, report, lambda_limit: pol.confidence()?.lambda_limit })
}

fn unit_state(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let x = ball_point(n, 1.0, rng);
    let norm = x.norm();
    if norm > 0.0 {
        x / norm
    } else {
        DVector::from_element(n, 1.0 / (n as f64).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct CompetitiveCase {
    pub report: CompetitiveReport,
    pub lambda_limit: f64,
    pub x0_norm: f64,
}

/// Gaussian disturbances with per-step norm about `scale`.
pub fn disturbances(n: usize, horizon: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    (0..horizon)
        .map(|_| DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng)) * (scale / (n as f64).sqrt()))
        .collect()
}

/// The adaptive policy against the exact optimum of a time-only residual
/// `f_t = w_t`, both charged the terminal value `x_TᵀPx_T`.
///
/// The black box is ε-consistent with the optimal feedforward policy.
pub fn competitive_case(syn: &Synthesis, epsilon: f64, scale: f64, alpha: f64, seed: u64, horizon: usize) -> Result<CompetitiveCase> {
    let (n, m) = (syn.model.state_dim(), syn.model.input_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = unit_state(n, &mut rng);
    let w = disturbances(n, horizon, scale, &mut rng);
    let black = epsilon_consistent_blackbox(auxiliary_optimal_policy(syn, &w), n, m, epsilon, BiasMode::Rotation, seed);
    let mut pol = adaptive_policy(syn, black, lqr_policy(syn), adaptive_config(alpha));
    let traj = simulate(&syn.model, &Disturbance::new(n, w.clone()), &mut pol, &x0, horizon);
    let opt = opt_cost_time_only(syn, &w, &x0).value();
    let report = competitive_ratio(traj.cost_with_terminal(&syn.p), opt, OptMethod::ExactTimeOnly)?;
    Ok(CompetitiveCase { report, lambda_limit: pol.confidence()?.lambda_limit, x0_norm: x0.norm() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsSettings {
    pub n: usize,
    pub m: usize,
    pub model_seed: u64,
    /// Grid of `C_ℓ` as fractions of the largest `C_ℓ` satisfying the
    /// hypotheses with a defined envelope prefactor.
    pub c_ell_fracs: Vec<f64>,
    /// Grid of `ε` as fractions of the same kind of limit at that `C_ℓ`.
    pub eps_fracs: Vec<f64>,
    pub alphas: Vec<f64>,
    pub seeds: usize,
    pub horizon: usize,
    /// Disturbance size of the ratio benchmark per unit `C_ℓ`.
    pub disturbance: f64,
    /// Extra ε as multiples of the stability precondition's `ε` limit, at or
    /// above 1, reported as violations; `none` in a config file disables them.
    pub violating_fracs: Vec<f64>,
    pub seed: u64,
}

impl Default for BoundsSettings {
    fn default() -> Self {
        Self {
            n: 3,
            m: 2,
            model_seed: 7,
            c_ell_fracs: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            eps_fracs: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            alphas: vec![0.01],
            seeds: 10,
            horizon: 200,
            disturbance: 1.0,
            violating_fracs: vec![1.5],
            seed: 0,
        }
    }
}

impl BoundsSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let s = "bounds";
        let out = Self {
            n: cfg.get(s, "n", d.n)?,
            m: cfg.get(s, "m", d.m)?,
            model_seed: cfg.get(s, "model_seed", d.model_seed)?,
            c_ell_fracs: cfg.get_list(s, "c_ell_fracs", &d.c_ell_fracs)?,
            eps_fracs: cfg.get_list(s, "eps_fracs", &d.eps_fracs)?,
            alphas: cfg.get_list(s, "alphas", &d.alphas)?,
            seeds: cfg.get(s, "seeds", d.seeds)?,
            horizon: cfg.get(s, "horizon", d.horizon)?,
            disturbance: cfg.get(s, "disturbance", d.disturbance)?,
            violating_fracs: match cfg.get_opt(s, "violating_fracs").as_deref() {
                Some("none") => Vec::new(),
                _ => cfg.get_list(s, "violating_fracs", &d.violating_fracs)?,
            },
            seed: read_seed(cfg)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.n >= 1 && self.m >= 1, || "[bounds] n and m must be at least 1".into())?;
        require(self.seeds >= 1 && self.horizon >= 10, || "[bounds] seeds must be at least 1 and horizon at least 10".into())?;
        let frac = |v: &[f64]| v.iter().all(|f| (0.0..1.0).contains(f));
        require(frac(&self.c_ell_fracs) && frac(&self.eps_fracs), || "[bounds] grid fractions must lie in [0, 1)".into())?;
        require(self.violating_fracs.iter().all(|f| *f >= 1.0), || "[bounds] violating_fracs must be at least 1".into())?;
        require(self.alphas.iter().all(|a| *a > 0.0 && *a <= 1.0), || "[bounds] alphas must lie in (0, 1]".into())?;
        require(self.disturbance >= 0.0, || "[bounds] disturbance must be non-negative".into())
    }
}

/// One grid point and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsRow {
    pub c_ell: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Empty when the point satisfies the hypotheses.
    pub violations: Vec<String>,
    pub envelope_ok: Option<bool>,
    pub worst_ratio: Option<f64>,
    pub ratio: Option<f64>,
    pub bound: Option<f64>,
    pub ratio_ok: Option<bool>,
}

impl BoundsRow {
    pub fn inside(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BoundsReport {
    pub constants: TheoremConstants,
    pub rows: Vec<BoundsRow>,
}

impl BoundsReport {
    /// Envelope and ratio pass counts over points inside the hypotheses.
    pub fn pass_counts(&self) -> (usize, usize, usize) {
        let inside: Vec<&BoundsRow> = self.rows.iter().filter(|r| r.inside()).collect();
        let env = inside.iter().filter(|r| r.envelope_ok == Some(true)).count();
        let cr = inside.iter().filter(|r| r.ratio_ok == Some(true)).count();
        (inside.len(), env, cr)
    }
}

/// The model, its synthesis, the constants at `C_ℓ = ε = 0` and the largest
/// `C_ℓ` of the grid.
pub fn bounds_benchmark(s: &BoundsSettings) -> Result<(Synthesis, TheoremConstants, f64)> {
    let syn = synthesize(&benchmark_model(s.n, s.m, s.model_seed)?)?;
    let base = theorem_constants(&syn, 0.0, 0.0);
    match envelope_c_ell_limit(&syn) {
        Some(limit) if base.eps_max_stability.is_some() => Ok((syn, base, limit)),
        _ => Err(Error::NotApplicable(format!("benchmark model has no admissible grid: {:?}", base.violations()))),
    }
}

/// `(C_ℓ, ε)` pairs of the grid, violating points last in each `C_ℓ` row.
pub fn grid_points(syn: &Synthesis, c_ell_limit: f64, s: &BoundsSettings) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &cf in &s.c_ell_fracs {
        let c_ell = cf * c_ell_limit;
        let eps_limit = envelope_eps_limit(syn, c_ell).unwrap_or(0.0);
        out.extend(s.eps_fracs.iter().map(|ef| (c_ell, ef * eps_limit)));
        let eps_max = theorem_constants(syn, c_ell, 0.0).eps_max_stability.unwrap_or(0.0);
        out.extend(s.violating_fracs.iter().map(|vf| (c_ell, vf * eps_max)));
    }
    out
}

pub fn verify_bounds_grid(s: &BoundsSettings) -> Result<BoundsReport> {
    s.validate()?;
    let (syn, base, c_ell_limit) = bounds_benchmark(s)?;
    let mut points = Vec::new();
    for (c_ell, epsilon) in grid_points(&syn, c_ell_limit, s) {
        for &alpha in &s.alphas {
            points.extend((0..s.seeds as u64).map(|k| (c_ell, epsilon, alpha, k)));
        }
    }
    let rows = points
        .par_iter()
        .map(|&(c_ell, epsilon, alpha, k)| -> Result<BoundsRow> {
            let constants = theorem_constants(&syn, c_ell, epsilon);
            let violations = constants.violations();
            let mut row = BoundsRow {
                c_ell,
                epsilon,
                alpha,
                seed: k,
                violations,
                envelope_ok: None,
                worst_ratio: None,
                ratio: None,
                bound: None,
                ratio_ok: None,
            };
            if !row.inside() {
                return Ok(row);
            }
            let seed = stream_seed(s.seed, &[k]);
            let env = envelope_case(&syn, c_ell, epsilon, alpha, seed, s.horizon)?;
            row.envelope_ok = env.report.satisfied;
            row.worst_ratio = env.report.worst_ratio;
            let cr = competitive_case(&syn, epsilon, s.disturbance * c_ell, alpha, seed, s.horizon);
            match cr {
                Ok(cr) => {
                    let cal = BoundCalibration::from_constants(&constants);
                    let check = verify_bounds(&constants, &cr.report, cr.lambda_limit, cr.x0_norm, &cal)?;
                    row.ratio = Some(check.ratio);
                    row.bound = Some(check.bound);
                    row.ratio_ok = Some(check.holds);
                }
                Err(Error::DegenerateOpt(_)) => {}
                Err(e) => return Err(e),
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsReport { constants: base, rows })
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_bounds_csv<W: Write>(rows: &[BoundsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["c_ell", "epsilon", "alpha", "seed", "status", "envelope_ok", "worst_ratio", "ratio", "bound", "ratio_ok"])
        .map_err(csv_err)?;
    for r in rows {
        let status = if r.inside() { "inside".to_string() } else { format!("violated: {}", r.violations.join("; ")) };
        w.write_record([
            r.c_ell.to_string(),
            r.epsilon.to_string(),
            r.alpha.to_string(),
            r.seed.to_string(),
            status,
            cell(r.envelope_ok),
            cell(r.worst_ratio),
            cell(r.ratio),
            cell(r.bound),
            cell(r.ratio_ok),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Pass/fail matrix keyed by grid point, with violated points marked.
pub fn pass_matrix(report: &BoundsReport) -> String {
    let mut keys: Vec<(f64, f64, f64)> = Vec::new();
    for r in &report.rows {
        let k = (r.c_ell, r.epsilon, r.alpha);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut text = format!("{:>12} {:>12} {:>8} {:>10} {:>10}\n", "C_ell", "epsilon", "alpha", "envelope", "ratio");
    for (c, e, a) in keys {
        let rows: Vec<&BoundsRow> = report.rows.iter().filter(|r| (r.c_ell, r.epsilon, r.alpha) == (c, e, a)).collect();
        let (env, cr) = if rows.iter().all(|r| !r.inside()) {
            ("violated".to_string(), "violated".to_string())
        } else {
            let n = rows.iter().filter(|r| r.envelope_ok.is_some()).count();
            let env = rows.iter().filter(|r| r.envelope_ok == Some(true)).count();
            let cr = rows.iter().filter(|r| r.ratio_ok == Some(true)).count();
            let cr_n = rows.iter().filter(|r| r.ratio_ok.is_some()).count();
            (if n == 0 { "-".into() } else { format!("{env}/{n}") }, if cr_n == 0 { "-".into() } else { format!("{cr}/{cr_n}") })
        };
        let _ = writeln!(text, "{c:>12.4e} {e:>12.4e} {a:>8} {env:>10} {cr:>10}");
    }
    text
}

pub fn run_verify_bounds(s: &BoundsSettings, out: &Path) -> Result<String> {
    let report = verify_bounds_grid(s)?;
    write_bounds_csv(&report.rows, create(out, "bounds.csv")?)?;
    let matrix = pass_matrix(&report);
    std::fs::write(out.join("bounds_matrix.txt"), &matrix)?;
    let (inside, env, cr) = report.pass_counts();
    Ok(format!(
        "{}\n{matrix}\ninside points {inside}: envelope {env}/{inside}, ratio bound {cr}/{inside}\n",
        report.constants
    ))
}
