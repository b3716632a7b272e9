//! The adaptive confidence policy: a monotone weight `λ_t` between a black box
//! and LQR advice, learned online from observed residuals.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{power_series_suffixes, pseudo_inverse, Synthesis};
use crate::plant::csv_err;
use crate::policy::Policy;

/// Observed history up to time `t`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub blackbox_actions: Vec<DVector<f64>>,
}

impl ObservationLog {
    pub fn t(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn is_consistent(&self) -> bool {
        self.actions.len() == self.blackbox_actions.len() && self.states.len() == self.actions.len() + 1
    }
}

/// First index of the numerator sum. The learning rule starts it at 1 while
/// the denominator starts at 0; `Zero` aligns both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumeratorStart {
    #[default]
    One,
    Zero,
}

impl std::str::FromStr for NumeratorStart {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "one" | "1" => Ok(Self::One),
            "zero" | "0" => Ok(Self::Zero),
            other => Err(format!("numerator start must be `one` or `zero`, got `{other}`")),
        }
    }
}

impl std::fmt::Display for NumeratorStart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::One => "one",
            Self::Zero => "zero",
        })
    }
}

/// Numerator and denominator of one `λ'` evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub numerator: f64,
    pub denominator: f64,
    pub value: f64,
}

/// Matrices the learning rule needs, computed once per synthesis.
#[derive(Debug, Clone)]
pub struct LambdaLearner {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    k: DMatrix<f64>,
    f: DMatrix<f64>,
    p: DMatrix<f64>,
    /// `(B H⁻¹)† B`.
    weight: DMatrix<f64>,
    pub start: NumeratorStart,
}

impl LambdaLearner {
    pub fn new(syn: &Synthesis, start: NumeratorStart) -> Self {
        let b = syn.model.b.clone();
        let weight = pseudo_inverse(&(&b * &syn.h_inv)) * &b;
        Self {
            a: syn.model.a.clone(),
            b,
            k: syn.k.clone(),
            f: syn.f.clone(),
            p: syn.p.clone(),
            weight,
            start,
        }
    }

    fn first_index(&self) -> usize {
        match self.start {
            NumeratorStart::One => 1,
            NumeratorStart::Zero => 0,
        }
    }

    pub fn estimate(&self, log: &ObservationLog) -> Result<LambdaEstimate> {
        if !log.is_consistent() {
            return Err(Error::Dimension("observation log lengths disagree".into()));
        }
        let t = log.t();
        let first = self.first_index();
        if log.states.is_empty() || t < first + 1 {
            return Err(Error::InsufficientHistory { have: log.states.len() });
        }
        let observed: Vec<DVector<f64>> = (0..t)
            .map(|tau| &self.a * &log.states[tau] + &self.b * &log.actions[tau] - &log.states[tau + 1])
            .collect();
        let costates = power_series_suffixes(&self.f, &self.p, &observed);
        let mut numerator = 0.0;
        let mut denominator = 0.0;
        for s in 0..t {
            let gap = &log.blackbox_actions[s] + &self.k * &log.states[s];
            denominator += gap.dot(&(&self.weight * &gap));
            if s >= first {
                numerator += costates[s].dot(&(&self.b * &gap));
            }
        }
        let value = if denominator.abs() < 1e-12 { 0.0 } else { numerator / denominator };
        Ok(LambdaEstimate { numerator, denominator, value })
    }
}

/// Online estimate `λ'` from the observed history (unclamped).
pub fn learn_lambda_prime(syn: &Synthesis, log: &ObservationLog, start: NumeratorStart) -> Result<f64> {
    LambdaLearner::new(syn, start).estimate(log).map(|e| e.value)
}

/// The best fixed weight in hindsight when the true residuals `f*` and the
/// black box's estimates `f̂` are both known, over the window `0..=t`.
pub fn optimal_lambda(syn: &Synthesis, f_star: &[DVector<f64>], f_hat: &[DVector<f64>], t: usize) -> f64 {
    let window = |seq: &[DVector<f64>]| -> Vec<DVector<f64>> {
        let n = syn.model.state_dim();
        (0..=t).map(|i| seq.get(i).cloned().unwrap_or_else(|| DVector::zeros(n))).collect()
    };
    let eta_star = power_series_suffixes(&syn.f, &syn.p, &window(f_star));
    let eta_hat = power_series_suffixes(&syn.f, &syn.p, &window(f_hat));
    let w = syn.bh_inv_bt();
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..=t {
        let weighted = &w * &eta_hat[s];
        num += eta_star[s].dot(&weighted);
        den += eta_hat[s].dot(&weighted);
    }
    if den < 1e-12 {
        0.0
    } else {
        num / den
    }
}

/// Where `λ'` comes from at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSource {
    Learned(NumeratorStart),
    /// `seq[t]` is used at step `t`; zero past the end.
    External(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveConfig {
    pub alpha: f64,
    pub source: LambdaSource,
    /// `‖x_t‖ ≤ zero_tolerance` counts as the zero state.
    pub zero_tolerance: f64,
    /// Optional floor `λ_t ≥ λ_{t−1} − δ` on the per-step decrease.
    pub decrease_cap: Option<f64>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            source: LambdaSource::Learned(NumeratorStart::One),
            zero_tolerance: 0.0,
            decrease_cap: None,
        }
    }
}

/// Which branch of the update produced `λ_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Init,
    ZeroState,
    /// Not enough history for `λ'`; treated as `λ' = 1`.
    NoHistory,
    Decrease,
    Collapse,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Init => "init",
            Branch::ZeroState => "zero_state",
            Branch::NoHistory => "no_history",
            Branch::Decrease => "decrease",
            Branch::Collapse => "collapse",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub lambda: f64,
    pub lambda_prime_raw: Option<f64>,
    pub branch: Branch,
    pub zero_state: bool,
}

/// Summary of a run's confidence sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceState {
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    /// First `t` with `λ_t = 0` or `x_t = 0`.
    pub t0: Option<usize>,
    pub lambda_limit: f64,
    pub records: Vec<StepRecord>,
}

impl ConfidenceState {
    fn from_records(records: &[StepRecord], alpha: f64) -> Self {
        let lambdas: Vec<f64> = records.iter().map(|r| r.lambda).collect();
        let t0 = records.iter().find(|r| r.lambda == 0.0 || r.zero_state).map(|r| r.t);
        let lambda_limit = lambdas.last().copied().unwrap_or(1.0);
        Self { lambdas, alpha, t0, lambda_limit, records: records.to_vec() }
    }

    pub fn is_monotone(&self) -> bool {
        self.lambdas.windows(2).all(|w| w[1] <= w[0])
    }

    /// CSV with header `t,lambda_t,lambda_prime_raw,branch_taken`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "lambda_t", "lambda_prime_raw", "branch_taken"]).map_err(csv_err)?;
        for r in &self.records {
            let raw = r.lambda_prime_raw.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([r.t.to_string(), r.lambda.to_string(), raw, r.branch.as_str().to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// The adaptive policy over a black box `π̂` and advice `π̄`.
pub struct AdaptivePolicy<Bb, Ad> {
    black: Bb,
    advice: Ad,
    learner: LambdaLearner,
    config: AdaptiveConfig,
    log: ObservationLog,
    records: Vec<StepRecord>,
}

pub fn adaptive_policy<Bb: Policy, Ad: Policy>(
    syn: &Synthesis,
    black: Bb,
    advice: Ad,
    config: AdaptiveConfig,
) -> AdaptivePolicy<Bb, Ad> {
    assert!(config.alpha > 0.0, "alpha must be positive");
    let start = match config.source {
        LambdaSource::Learned(s) => s,
        LambdaSource::External(_) => NumeratorStart::One,
    };
    AdaptivePolicy {
        black,
        advice,
        learner: LambdaLearner::new(syn, start),
        config,
        log: ObservationLog::default(),
        records: Vec::new(),
    }
}

impl<Bb: Policy, Ad: Policy> AdaptivePolicy<Bb, Ad> {
    pub fn log(&self) -> &ObservationLog {
        &self.log
    }

    pub fn config(&self) -> &AdaptiveConfig {
        &self.config
    }

    pub fn confidence(&self) -> Result<ConfidenceState> {
        confidence_trace(self)
    }

    fn next_lambda(&self, t: usize, x: &DVector<f64>) -> (f64, Option<f64>, Branch) {
        if t == 0 {
            return (1.0, None, Branch::Init);
        }
        let prev = self.records.last().map_or(1.0, |r| r.lambda);
        if x.norm() <= self.config.zero_tolerance {
            return (prev, None, Branch::ZeroState);
        }
        let (raw, branch) = match &self.config.source {
            LambdaSource::External(seq) => (Some(seq.get(t).copied().unwrap_or(0.0)), Branch::Decrease),
            LambdaSource::Learned(_) => match self.learner.estimate(&self.log) {
                Ok(e) => (Some(e.value), Branch::Decrease),
                Err(_) => (None, Branch::NoHistory),
            },
        };
        let prime = raw.map_or(1.0, |v| if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 });
        let alpha = self.config.alpha;
        let (mut lambda, mut branch) = if prime > 0.0 && prev > alpha {
            (prime.min(prev - alpha), branch)
        } else {
            (0.0, Branch::Collapse)
        };
        if let Some(cap) = self.config.decrease_cap {
            if lambda < prev - cap {
                lambda = prev - cap;
                branch = Branch::Decrease;
            }
        }
        (lambda.clamp(0.0, 1.0), raw, branch)
    }
}

impl<Bb: Policy, Ad: Policy> Policy for AdaptivePolicy<Bb, Ad> {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        if t == 0 {
            self.log = ObservationLog::default();
            self.records.clear();
        }
        self.log.states.push(x.clone());
        let (lambda, raw, branch) = self.next_lambda(t, x);
        let zero_state = x.norm() <= self.config.zero_tolerance;
        self.records.push(StepRecord { t, lambda, lambda_prime_raw: raw, branch, zero_state });
        let suggestion = self.black.act(t, x);
        let advice = self.advice.act(t, x);
        let u = &suggestion * lambda + advice * (1.0 - lambda);
        self.log.blackbox_actions.push(suggestion);
        self.log.actions.push(u.clone());
        u
    }

    fn label(&self) -> String {
        "adaptive".into()
    }

    fn is_stateful(&self) -> bool {
        true
    }
}

/// The recorded confidence sequence of the last run.
pub fn confidence_trace<Bb: Policy, Ad: Policy>(policy: &AdaptivePolicy<Bb, Ad>) -> Result<ConfidenceState> {
    if policy.records.is_empty() {
        return Err(Error::NotRun);
    }
    Ok(ConfidenceState::from_records(&policy.records, policy.config.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{synthesize, LinearModel};
    use crate::policy::{lqr_policy, LinearFeedback};

    fn scalar_syn() -> Synthesis {
        let s = |v| DMatrix::from_element(1, 1, v);
        synthesize(&LinearModel::new(s(1.0), s(1.0), s(1.0), s(1.0)).unwrap()).unwrap()
    }

    fn external(seq: Vec<f64>, alpha: f64) -> AdaptiveConfig {
        AdaptiveConfig { alpha, source: LambdaSource::External(seq), ..Default::default() }
    }

    fn run(config: AdaptiveConfig, xs: &[f64]) -> ConfidenceState {
        let syn = scalar_syn();
        let black = LinearFeedback::new(DMatrix::from_element(1, 1, 0.2), "bb");
        let mut pol = adaptive_policy(&syn, black, lqr_policy(&syn), config);
        for (t, &x) in xs.iter().enumerate() {
            pol.act(t, &DVector::from_element(1, x));
        }
        confidence_trace(&pol).unwrap()
    }

    #[test]
    fn direct_rule_application() {
        let st = run(external(vec![0.0, 0.9], 0.2), &[1.0, 1.0]);
        assert_eq!(st.lambdas[0], 1.0);
        assert!((st.lambdas[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn small_previous_weight_collapses() {
        let st = run(external(vec![0.0, 0.5, 0.5, 0.5, 0.5, 0.5], 0.2), &[1.0; 6]);
        // 1 → 0.5 → 0.3 → 0.1 → 0 (0.1 ≤ α)
        assert!((st.lambdas[3] - 0.1).abs() < 1e-12);
        assert_eq!(st.lambdas[4], 0.0);
        assert_eq!(st.t0, Some(4));
        assert_eq!(st.records[4].branch, Branch::Collapse);
    }

    #[test]
    fn zero_state_keeps_weight() {
        let st = run(external(vec![0.0, 0.6, 0.6, 0.6], 0.1), &[1.0, 1.0, 1.0, 0.0]);
        // 1 → 0.6 → 0.5, then held at the zero state
        assert!((st.lambdas[3] - 0.5).abs() < 1e-12);
        assert_eq!(st.t0, Some(3));
        assert!((st.lambda_limit - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trace_before_run_is_an_error() {
        let syn = scalar_syn();
        let pol = adaptive_policy(&syn, lqr_policy(&syn), lqr_policy(&syn), AdaptiveConfig::default());
        assert_eq!(confidence_trace(&pol).unwrap_err(), Error::NotRun);
    }

    #[test]
    fn learned_rule_agrees_with_lqr_blackbox_gives_zero() {
        let syn = scalar_syn();
        let log = ObservationLog {
            states: vec![DVector::from_element(1, 1.0), DVector::from_element(1, 0.5), DVector::from_element(1, 0.2)],
            actions: vec![DVector::from_element(1, -0.3), DVector::from_element(1, -0.1)],
            blackbox_actions: vec![-(&syn.k * DVector::from_element(1, 1.0)), -(&syn.k * DVector::from_element(1, 0.5))],
        };
        assert_eq!(learn_lambda_prime(&syn, &log, NumeratorStart::One).unwrap(), 0.0);
        let short = ObservationLog {
            states: log.states[..2].to_vec(),
            actions: log.actions[..1].to_vec(),
            blackbox_actions: log.blackbox_actions[..1].to_vec(),
        };
        assert!(matches!(learn_lambda_prime(&syn, &short, NumeratorStart::One), Err(Error::InsufficientHistory { .. })));
        assert!(learn_lambda_prime(&syn, &short, NumeratorStart::Zero).is_ok());
    }

    #[test]
    fn optimal_lambda_identities() {
        let syn = scalar_syn();
        let f: Vec<_> = (0..30).map(|i| DVector::from_element(1, (i as f64 * 0.37).cos())).collect();
        assert!((optimal_lambda(&syn, &f, &f, 29) - 1.0).abs() < 1e-15);
        let f2: Vec<_> = f.iter().map(|v| v * 2.0).collect();
        assert!((optimal_lambda(&syn, &f, &f2, 29) - 0.5).abs() < 1e-14);
        let zero = vec![DVector::zeros(1); 30];
        assert_eq!(optimal_lambda(&syn, &f, &zero, 29), 0.0);
    }

    #[test]
    fn csv_columns() {
        let st = run(external(vec![0.0, 0.9, 0.9], 0.2), &[1.0, 1.0, 1.0]);
        let mut buf = Vec::new();
        st.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,lambda_t,lambda_prime_raw,branch_taken\n0,1,,init\n1,0.8,0.9,decrease"));
    }
}
