//! Initial-angle sweeps and per-step traces on the cart-pole.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::results::{write_summary_csv, ResultRow, ResultTable};
use super::{create, read_adaptive, read_seed, require, stream_seed};
use crate::adaptive::{adaptive_policy, AdaptiveConfig, ConfidenceState, NumeratorStart};
use crate::config::RunConfig;
use crate::envs::cartpole::{cartpole_linearization, cartpole_residual, initial_state, CartPoleParams};
use crate::error::{Error, Result};
use crate::linalg::{synthesize, LinearModel, Synthesis};
use crate::plant::{csv_err, simulate_with, Residual, SimOptions, Trajectory, ZeroResidual};
use crate::policy::{epsilon_consistent_blackbox, lqr_policy, naive_convex_policy, BiasMode, LinearFeedback, Policy, Saturated};

/// The policies a cart-pole run can use.
///
/// The good black box is LQR synthesized on the true plant's linearization,
/// optionally perturbed to be ε-consistent. The flipped one applies `+Kx`
/// with the crude model's gain and pushes the pole over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CartPolicy {
    Lqr,
    BlackBox,
    Naive,
    Adaptive,
    Flipped,
    NaiveFlipped,
    AdaptiveFlipped,
}

impl CartPolicy {
    pub const ALL: [CartPolicy; 7] = [
        CartPolicy::Lqr,
        CartPolicy::BlackBox,
        CartPolicy::Naive,
        CartPolicy::Adaptive,
        CartPolicy::Flipped,
        CartPolicy::NaiveFlipped,
        CartPolicy::AdaptiveFlipped,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CartPolicy::Lqr => "lqr",
            CartPolicy::BlackBox => "blackbox",
            CartPolicy::Naive => "naive",
            CartPolicy::Adaptive => "adaptive",
            CartPolicy::Flipped => "flipped",
            CartPolicy::NaiveFlipped => "naive-flipped",
            CartPolicy::AdaptiveFlipped => "adaptive-flipped",
        }
    }

    fn uses_good_blackbox(self) -> bool {
        matches!(self, CartPolicy::BlackBox | CartPolicy::Naive | CartPolicy::Adaptive)
    }
}

impl FromStr for CartPolicy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}`"))
    }
}

impl std::fmt::Display for CartPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: CartPolicy,
    /// Consistency level of the good black box; ignored by the others.
    pub epsilon: f64,
}

impl PolicySpec {
    pub fn new(kind: CartPolicy) -> Self {
        Self { kind, epsilon: 0.0 }
    }

    pub fn label(&self) -> String {
        if self.kind.uses_good_blackbox() && self.epsilon > 0.0 {
            format!("{}@eps={}", self.kind, self.epsilon)
        } else {
            self.kind.to_string()
        }
    }
}

/// One spec per kind, with good-black-box kinds repeated for every ε.
pub fn expand_roster(kinds: &[CartPolicy], epsilons: &[f64]) -> Vec<PolicySpec> {
    let mut out = Vec::new();
    for &kind in kinds {
        if kind.uses_good_blackbox() {
            out.extend(epsilons.iter().map(|&epsilon| PolicySpec { kind, epsilon }));
        } else {
            out.push(PolicySpec::new(kind));
        }
    }
    out
}

/// Plant, model and policy parameters shared by sweeps and traces.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleSetup {
    pub params: CartPoleParams,
    /// A run counts as diverged once `|θ|` exceeds this.
    pub theta_limit: f64,
    pub adaptive: AdaptiveConfig,
    pub naive_lambda: f64,
    /// Simulate the crude linear model itself, without the force limit,
    /// instead of the nonlinear plant.
    pub linear_plant: bool,
    pub bias_mode: BiasMode,
}

impl Default for CartPoleSetup {
    fn default() -> Self {
        Self {
            params: CartPoleParams::default(),
            theta_limit: std::f64::consts::FRAC_PI_2,
            adaptive: AdaptiveConfig {
                alpha: 0.002,
                source: crate::adaptive::LambdaSource::Learned(NumeratorStart::Zero),
                ..AdaptiveConfig::default()
            },
            naive_lambda: 0.8,
            linear_plant: false,
            bias_mode: BiasMode::Rotation,
        }
    }
}

impl CartPoleSetup {
    /// Reads `[cartpole]` and `[adaptive]`; `section` supplies the plant choice
    /// and the naive weight.
    pub fn from_config(cfg: &RunConfig, section: &str) -> Result<Self> {
        let d = Self::default();
        let dp = d.params;
        let c = "cartpole";
        let params = CartPoleParams {
            g: cfg.get(c, "g", dp.g)?,
            m: cfg.get(c, "m", dp.m)?,
            cart: cfg.get(c, "cart", dp.cart)?,
            l: cfg.get(c, "l", dp.l)?,
            tau: cfg.get(c, "tau", dp.tau)?,
            f_mag: cfg.get(c, "f_mag", dp.f_mag)?,
            model_m: cfg.get(c, "model_m", dp.model_m)?,
            model_cart: cfg.get(c, "model_cart", dp.model_cart)?,
            model_l: cfg.get(c, "model_l", dp.model_l)?,
            q_weight: cfg.get(c, "q_weight", dp.q_weight)?,
            r_weight: cfg.get(c, "r_weight", dp.r_weight)?,
        };
        let theta_limit = cfg.get(c, "theta_limit", d.theta_limit)?;
        let bias: String = cfg.get(c, "bias_mode", "rotation".to_string())?;
        let bias_mode = bias.parse().map_err(Error::Config)?;
        let adaptive = read_adaptive(cfg, d.adaptive.alpha, NumeratorStart::Zero)?;
        let naive_lambda = cfg.get(section, "naive_lambda", d.naive_lambda)?;
        let plant: String = cfg.get(section, "plant", "nonlinear".to_string())?;
        let linear_plant = match plant.as_str() {
            "nonlinear" => false,
            "linear" => true,
            other => return Err(Error::Config(format!("[{section}] plant must be `nonlinear` or `linear`, got `{other}`"))),
        };
        let setup = Self { params, theta_limit, adaptive, naive_lambda, linear_plant, bias_mode };
        setup.validate()?;
        Ok(setup)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        require(p.true_body().is_valid(), || "[cartpole] true plant parameters must be positive".into())?;
        require(p.model_body().is_valid(), || "[cartpole] model parameters must be positive".into())?;
        require(p.f_mag > 0.0 && p.q_weight > 0.0 && p.r_weight > 0.0, || {
            "[cartpole] f_mag, q_weight and r_weight must be positive".into()
        })?;
        require(self.theta_limit > 0.0, || "[cartpole] theta_limit must be positive".into())?;
        require((0.0..=1.0).contains(&self.naive_lambda), || "naive_lambda must lie in [0, 1]".into())
    }

    pub fn build(&self) -> Result<CartPoleBench> {
        self.validate()?;
        let (model, nonlinear) = cartpole_residual(&self.params);
        let syn = synthesize(&model)?;
        let p = &self.params;
        let true_syn = synthesize(&cartpole_linearization(&p.true_body(), p.q_weight, p.r_weight))?;
        let residual: Box<dyn Residual> =
            if self.linear_plant { Box::new(ZeroResidual { n: 4 }) } else { Box::new(nonlinear) };
        Ok(CartPoleBench {
            setup: self.clone(),
            model,
            syn,
            true_gain: true_syn.k,
            residual,
            options: SimOptions { coordinate_limits: vec![(2, self.theta_limit)], ..SimOptions::default() },
        })
    }
}

/// Everything a cart-pole simulation needs, built once and shared by workers.
pub struct CartPoleBench {
    pub setup: CartPoleSetup,
    pub model: LinearModel,
    pub syn: Synthesis,
    pub true_gain: DMatrix<f64>,
    pub residual: Box<dyn Residual>,
    pub options: SimOptions,
}

pub struct RunOutcome {
    pub trajectory: Trajectory,
    /// Recorded `λ_t` of an adaptive policy.
    pub confidence: Option<ConfidenceState>,
}

impl CartPoleBench {
    fn saturate<P: Policy>(&self, p: P) -> Saturated<P> {
        let limit = if self.setup.linear_plant { f64::INFINITY } else { self.setup.params.f_mag };
        Saturated::new(p, limit)
    }

    fn good_blackbox(&self, epsilon: f64, seed: u64) -> impl Policy {
        let optimal = LinearFeedback::new(self.true_gain.clone(), "true-lqr");
        self.saturate(epsilon_consistent_blackbox(optimal, 4, 1, epsilon, self.setup.bias_mode, seed))
    }

    fn flipped(&self) -> impl Policy {
        self.saturate(LinearFeedback::new(-&self.syn.k, "flipped"))
    }

    fn advice(&self) -> impl Policy {
        self.saturate(lqr_policy(&self.syn))
    }

    /// Runs one policy from `x0`; `seed` fixes the black-box perturbation.
    pub fn run(&self, spec: &PolicySpec, x0: &DVector<f64>, horizon: usize, seed: u64) -> RunOutcome {
        let sim = |p: &mut dyn Policy| simulate_with(&self.model, self.residual.as_ref(), p, x0, horizon, &self.options);
        let adaptive = |black: Box<dyn Policy>| {
            let mut pol = adaptive_policy(&self.syn, black, self.advice(), self.setup.adaptive.clone());
            let trajectory = sim(&mut pol);
            RunOutcome { trajectory, confidence: pol.confidence().ok() }
        };
        let plain = |mut p: Box<dyn Policy>| RunOutcome { trajectory: sim(p.as_mut()), confidence: None };
        let lambda = self.setup.naive_lambda;
        match spec.kind {
            CartPolicy::Lqr => plain(Box::new(self.advice())),
            CartPolicy::BlackBox => plain(Box::new(self.good_blackbox(spec.epsilon, seed))),
            CartPolicy::Flipped => plain(Box::new(self.flipped())),
            CartPolicy::Naive => {
                plain(Box::new(naive_convex_policy(self.good_blackbox(spec.epsilon, seed), self.advice(), lambda)))
            }
            CartPolicy::NaiveFlipped => plain(Box::new(naive_convex_policy(self.flipped(), self.advice(), lambda))),
            CartPolicy::Adaptive => adaptive(Box::new(self.good_blackbox(spec.epsilon, seed))),
            CartPolicy::AdaptiveFlipped => adaptive(Box::new(self.flipped())),
        }
    }

    /// The fixed blending weight of a non-adaptive policy.
    pub fn fixed_lambda(&self, kind: CartPolicy) -> Option<f64> {
        match kind {
            CartPolicy::Lqr => Some(0.0),
            CartPolicy::BlackBox | CartPolicy::Flipped => Some(1.0),
            CartPolicy::Naive | CartPolicy::NaiveFlipped => Some(self.setup.naive_lambda),
            CartPolicy::Adaptive | CartPolicy::AdaptiveFlipped => None,
        }
    }
}

fn read_roster(cfg: &RunConfig, section: &str, default: &[CartPolicy]) -> Result<Vec<PolicySpec>> {
    let kinds: Vec<CartPolicy> = cfg.get_list(section, "policies", default)?;
    let epsilons: Vec<f64> = cfg.get_list(section, "epsilons", &[0.0])?;
    require(epsilons.iter().all(|e| *e >= 0.0), || format!("[{section}] epsilons must be non-negative"))?;
    Ok(expand_roster(&kinds, &epsilons))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub setup: CartPoleSetup,
    pub thetas: Vec<f64>,
    /// Monte Carlo runs per angle.
    pub runs: usize,
    /// Half-width of the uniform initial-angle perturbation.
    pub jitter: f64,
    pub horizon: usize,
    pub roster: Vec<PolicySpec>,
    pub seed: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            setup: CartPoleSetup::default(),
            thetas: vec![0.1, 0.2, 0.3, 0.4],
            runs: 10,
            jitter: 0.05,
            horizon: 300,
            roster: expand_roster(&CartPolicy::ALL, &[0.0]),
            seed: 0,
        }
    }
}

impl SweepSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let s = "sweep";
        let out = Self {
            setup: CartPoleSetup::from_config(cfg, s)?,
            thetas: cfg.get_list(s, "thetas", &d.thetas)?,
            runs: cfg.get(s, "runs", d.runs)?,
            jitter: cfg.get(s, "jitter", d.jitter)?,
            horizon: cfg.get(s, "horizon", d.horizon)?,
            roster: read_roster(cfg, s, &CartPolicy::ALL)?,
            seed: read_seed(cfg)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        require(!self.thetas.is_empty() && !self.roster.is_empty(), || "[sweep] thetas and policies must be non-empty".into())?;
        require(self.thetas.iter().all(|t| t.is_finite()), || "[sweep] thetas must be finite".into())?;
        require(self.runs >= 1 && self.horizon >= 1, || "[sweep] runs and horizon must be at least 1".into())?;
        require(self.jitter >= 0.0, || "[sweep] jitter must be non-negative".into())?;
        self.setup.validate()
    }
}

/// `θ + U(−jitter, jitter)` for one (angle, run) pair, identical for every policy.
pub fn jittered_angle(seed: u64, theta_index: usize, run: usize, theta: f64, jitter: f64) -> f64 {
    if jitter == 0.0 {
        return theta;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[theta_index as u64, run as u64]));
    theta + rng.gen_range(-jitter..jitter)
}

fn lambda_summary(c: &Option<ConfidenceState>) -> (Option<f64>, Option<f64>) {
    match c {
        Some(c) => (Some(c.lambda_limit), Some(c.lambdas.iter().sum::<f64>() / c.lambdas.len() as f64)),
        None => (None, None),
    }
}

/// One row per (angle, policy, run), cost summed over the simulated steps.
pub fn sweep_theta(settings: &SweepSettings) -> Result<ResultTable> {
    settings.validate()?;
    let bench = settings.setup.build()?;
    let jobs: Vec<(usize, usize, &PolicySpec)> = (0..settings.thetas.len())
        .flat_map(|i| (0..settings.runs).flat_map(move |r| settings.roster.iter().map(move |p| (i, r, p))))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, run, spec)| {
            let theta = settings.thetas[i];
            let x0 = initial_state(jittered_angle(settings.seed, i, run, theta, settings.jitter));
            let bb_seed = stream_seed(settings.seed, &[u64::MAX, run as u64]);
            let out = bench.run(spec, &x0, settings.horizon, bb_seed);
            let (lambda_final, lambda_mean) = lambda_summary(&out.confidence);
            ResultRow {
                point: format!("theta={theta}"),
                policy: spec.label(),
                seed: run as u64,
                metric: "cost".into(),
                value: out.trajectory.total_cost,
                diverged: out.trajectory.diverged,
                lambda_final,
                lambda_mean,
                ratio: None,
            }
        })
        .collect();
    let mut table = ResultTable { rows };
    table.sort();
    Ok(table)
}

pub fn run_sweep(settings: &SweepSettings, out: &Path) -> Result<String> {
    let table = sweep_theta(settings)?;
    table.write_csv(create(out, "sweep.csv")?)?;
    let summary = table.summarize();
    write_summary_csv(&summary, create(out, "sweep_summary.csv")?)?;
    let mut text = format!("{:<12} {:<24} {:>14} {:>10} {:>9}\n", "point", "policy", "mean cost", "diverged", "λ final");
    for s in &summary {
        let lam = s.lambda_final_mean.map_or("-".to_string(), |v| format!("{v:.3}"));
        let _ = writeln!(text, "{:<12} {:<24} {:>14.4} {:>7}/{:<2} {:>9}", s.point, s.policy, s.mean, s.diverged, s.runs, lam);
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSettings {
    pub setup: CartPoleSetup,
    pub theta: f64,
    pub horizon: usize,
    pub roster: Vec<PolicySpec>,
    pub seed: u64,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            setup: CartPoleSetup::default(),
            theta: 0.4,
            horizon: 300,
            roster: expand_roster(&[CartPolicy::Lqr, CartPolicy::Adaptive, CartPolicy::NaiveFlipped, CartPolicy::AdaptiveFlipped], &[0.0]),
            seed: 0,
        }
    }
}

impl TraceSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let s = "trace";
        let kinds: Vec<CartPolicy> = d.roster.iter().map(|p| p.kind).collect();
        let out = Self {
            setup: CartPoleSetup::from_config(cfg, s)?,
            theta: cfg.get(s, "theta", d.theta)?,
            horizon: cfg.get(s, "horizon", d.horizon)?,
            roster: read_roster(cfg, s, &kinds)?,
            seed: read_seed(cfg)?,
        };
        require(out.horizon >= 1 && out.theta.is_finite(), || "[trace] horizon must be at least 1 and theta finite".into())?;
        require(!out.roster.is_empty(), || "[trace] policies must be non-empty".into())?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub policy: String,
    pub t: usize,
    pub state_norm: f64,
    /// Blending weight on the black box at `t`; empty past the last action.
    pub lambda: Option<f64>,
    pub lambda_prime_raw: Option<f64>,
}

/// `‖x_t‖` and the confidence sequence of each policy from one initial angle.
pub fn stability_trace(settings: &TraceSettings) -> Result<Vec<TraceRow>> {
    let bench = settings.setup.build()?;
    let x0 = initial_state(settings.theta);
    let per_policy: Vec<Vec<TraceRow>> = settings
        .roster
        .par_iter()
        .map(|spec| {
            let out = bench.run(spec, &x0, settings.horizon, stream_seed(settings.seed, &[u64::MAX, 0]));
            let steps = out.trajectory.actions.len();
            let label = spec.label();
            out.trajectory
                .states
                .iter()
                .enumerate()
                .map(|(t, x)| {
                    let (lambda, raw) = match (&out.confidence, t < steps) {
                        (_, false) => (None, None),
                        (Some(c), true) => (Some(c.records[t].lambda), c.records[t].lambda_prime_raw),
                        (None, true) => (bench.fixed_lambda(spec.kind), None),
                    };
                    TraceRow { policy: label.clone(), t, state_norm: x.norm(), lambda, lambda_prime_raw: raw }
                })
                .collect()
        })
        .collect();
    Ok(per_policy.into_iter().flatten().collect())
}

pub fn write_trace_csv<W: Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["policy", "t", "state_norm", "lambda", "lambda_prime_raw"]).map_err(csv_err)?;
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([r.policy.clone(), r.t.to_string(), r.state_norm.to_string(), cell(r.lambda), cell(r.lambda_prime_raw)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_trace(settings: &TraceSettings, out: &Path) -> Result<String> {
    let rows = stability_trace(settings)?;
    write_trace_csv(&rows, create(out, "trace.csv")?)?;
    let mut text = String::new();
    for spec in &settings.roster {
        let label = spec.label();
        let mine: Vec<&TraceRow> = rows.iter().filter(|r| r.policy == label).collect();
        let last = mine.last().expect("every trace has its initial state");
        let lam = mine.iter().rev().find_map(|r| r.lambda).map_or("-".into(), |v| format!("{v:.3}"));
        let _ = writeln!(text, "{label:<24} steps {:>5}  final ‖x‖ {:>12.4e}  last λ {lam}", last.t, last.state_norm);
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(thetas: Vec<f64>, kinds: &[CartPolicy]) -> SweepSettings {
        SweepSettings { thetas, runs: 2, horizon: 120, roster: expand_roster(kinds, &[0.0]), ..SweepSettings::default() }
    }

    #[test]
    fn upright_start_costs_nothing() {
        let s = SweepSettings { jitter: 0.0, ..quick(vec![0.0], &[CartPolicy::Lqr]) };
        let table = sweep_theta(&s).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows.iter().all(|r| r.value == 0.0 && !r.diverged));
    }

    #[test]
    fn sweep_is_reproducible_and_complete() {
        let s = quick(vec![0.1, 0.3], &[CartPolicy::Lqr, CartPolicy::Adaptive]);
        let a = sweep_theta(&s).unwrap();
        assert_eq!(a.rows.len(), 2 * 2 * 2);
        assert_eq!(a, sweep_theta(&s).unwrap());
        let ad = a.rows.iter().find(|r| r.policy == "adaptive").unwrap();
        assert!(ad.lambda_final.unwrap() <= 1.0);
    }

    #[test]
    fn roster_labels_carry_epsilon() {
        let r = expand_roster(&[CartPolicy::Lqr, CartPolicy::Adaptive], &[0.0, 0.05]);
        let labels: Vec<_> = r.iter().map(PolicySpec::label).collect();
        assert_eq!(labels, ["lqr", "adaptive", "adaptive@eps=0.05"]);
        assert_eq!("naive-flipped".parse::<CartPolicy>(), Ok(CartPolicy::NaiveFlipped));
        assert!("bogus".parse::<CartPolicy>().is_err());
    }

    #[test]
    fn zero_initial_state_gives_zero_trace() {
        let s = TraceSettings { theta: 0.0, horizon: 50, ..TraceSettings::default() };
        let rows = stability_trace(&s).unwrap();
        assert_eq!(rows.len(), 4 * 51);
        assert!(rows.iter().all(|r| r.state_norm == 0.0));
    }

    #[test]
    fn linear_plant_lqr_trace_decays_at_closed_loop_rate() {
        let mut s = TraceSettings { theta: 0.3, horizon: 400, roster: vec![PolicySpec::new(CartPolicy::Lqr)], ..TraceSettings::default() };
        s.setup.linear_plant = true;
        let bench = s.setup.build().unwrap();
        let rows = stability_trace(&s).unwrap();
        let (a, b) = (rows[100].state_norm, rows[400].state_norm);
        let slope = (b.ln() - a.ln()) / 300.0;
        assert!(slope <= bench.syn.rho.ln() + 1e-3, "slope {slope} vs {}", bench.syn.rho.ln());
    }

    #[test]
    fn adaptive_trace_lambda_never_increases() {
        let s = TraceSettings { roster: expand_roster(&[CartPolicy::AdaptiveFlipped, CartPolicy::Adaptive], &[0.0]), ..TraceSettings::default() };
        let rows = stability_trace(&s).unwrap();
        for label in ["adaptive", "adaptive-flipped"] {
            let l: Vec<f64> = rows.iter().filter(|r| r.policy == label).filter_map(|r| r.lambda).collect();
            assert_eq!(l[0], 1.0);
            assert!(l.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
