//! Policies: LQR advice, the hindsight-optimal policy of the auxiliary linear
//! system, synthetic black boxes and the fixed-weight convex combination.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{op_norm, power_series_suffixes, Synthesis};

/// A state-feedback law queried once per step, in time order.
pub trait Policy: Send {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64>;
    fn label(&self) -> String;
    fn is_stateful(&self) -> bool {
        false
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        (**self).act(t, x)
    }
    fn label(&self) -> String {
        (**self).label()
    }
    fn is_stateful(&self) -> bool {
        (**self).is_stateful()
    }
}

/// `u = −G x`.
#[derive(Debug, Clone)]
pub struct LinearFeedback {
    pub gain: DMatrix<f64>,
    label: String,
}

impl LinearFeedback {
    pub fn new(gain: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self { gain, label: label.into() }
    }
}

impl Policy for LinearFeedback {
    fn act(&mut self, _t: usize, x: &DVector<f64>) -> DVector<f64> {
        -(&self.gain * x)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Model-based advice `u = −K x`.
pub fn lqr_policy(syn: &Synthesis) -> LinearFeedback {
    LinearFeedback::new(syn.k.clone(), "lqr")
}

/// `u_t = −K x − H⁻¹Bᵀ Σ_{τ≥t} (Fᵀ)^{τ−t} P f_τ` with the sums precomputed.
#[derive(Debug, Clone)]
pub struct FeedforwardLqr {
    k: DMatrix<f64>,
    /// `H⁻¹Bᵀ S_t` for each `t`; zero past the end.
    offsets: Vec<DVector<f64>>,
    label: String,
}

impl FeedforwardLqr {
    pub fn new(syn: &Synthesis, estimates: &[DVector<f64>], label: impl Into<String>) -> Self {
        let h_inv_bt = syn.h_inv_bt();
        let offsets = power_series_suffixes(&syn.f, &syn.p, estimates)
            .iter()
            .take(estimates.len())
            .map(|s| &h_inv_bt * s)
            .collect();
        Self { k: syn.k.clone(), offsets, label: label.into() }
    }

    /// The feedforward part `û_t + K x` at time `t`.
    pub fn offset(&self, t: usize) -> DVector<f64> {
        match self.offsets.get(t) {
            Some(o) => -o,
            None => DVector::zeros(self.k.nrows()),
        }
    }
}

impl Policy for FeedforwardLqr {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut u = -(&self.k * x);
        if let Some(o) = self.offsets.get(t) {
            u -= o;
        }
        u
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Exact optimum of the linear plant driven by the known disturbances `w`.
pub fn auxiliary_optimal_policy(syn: &Synthesis, w: &[DVector<f64>]) -> FeedforwardLqr {
    FeedforwardLqr::new(syn, w, "optimal")
}

/// Black box linearly parameterized by residual estimates `f̂`.
pub fn parameterized_blackbox(syn: &Synthesis, f_hat: &[DVector<f64>]) -> FeedforwardLqr {
    FeedforwardLqr::new(syn, f_hat, "parameterized")
}

/// How an ε-consistent black box departs from the optimal policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasMode {
    /// `e(x) = ε‖x‖ d(x)`, `d(x)` a unit vector hashed from `x`.
    Rotation,
    /// `e(x) = ε‖x‖ d₀` with one fixed unit vector `d₀`.
    Scaling,
    /// `e(x) = ε Δ x` with a fixed `Δ`, `‖Δ‖ = 1`.
    OffsetGain,
}

impl std::str::FromStr for BiasMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rotation" => Ok(Self::Rotation),
            "scaling" => Ok(Self::Scaling),
            "offset_gain" => Ok(Self::OffsetGain),
            other => Err(format!("unknown bias mode `{other}`")),
        }
    }
}

/// `π̂(x) = π*(x) + e(x)` with `‖e(x)‖ ≤ ε‖x‖`.
pub struct EpsilonConsistent<P> {
    inner: P,
    epsilon: f64,
    mode: BiasMode,
    seed: u64,
    direction: DVector<f64>,
    delta: DMatrix<f64>,
}

impl<P: Policy> EpsilonConsistent<P> {
    pub fn perturbation(&self, x: &DVector<f64>) -> DVector<f64> {
        let norm = x.norm();
        if norm == 0.0 || self.epsilon == 0.0 {
            return DVector::zeros(self.direction.len());
        }
        match self.mode {
            BiasMode::Rotation => hashed_direction(x, self.seed, self.direction.len()) * (self.epsilon * norm),
            BiasMode::Scaling => &self.direction * (self.epsilon * norm),
            BiasMode::OffsetGain => &self.delta * x * self.epsilon,
        }
    }
}

impl<P: Policy> Policy for EpsilonConsistent<P> {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        self.inner.act(t, x) + self.perturbation(x)
    }
    fn label(&self) -> String {
        format!("{}+eps{}", self.inner.label(), self.epsilon)
    }
    fn is_stateful(&self) -> bool {
        self.inner.is_stateful()
    }
}

pub fn epsilon_consistent_blackbox<P: Policy>(
    optimal: P,
    n: usize,
    m: usize,
    epsilon: f64,
    mode: BiasMode,
    seed: u64,
) -> EpsilonConsistent<P> {
    assert!(epsilon >= 0.0, "epsilon must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = unit_gaussian(m, &mut rng);
    let raw = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
    let norm = op_norm(&raw);
    let delta = if norm > 0.0 { raw / norm } else { raw };
    EpsilonConsistent { inner: optimal, epsilon, mode, seed, direction, delta }
}

fn unit_gaussian(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let g = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic unit vector from the quantized coordinates of `x`.
fn hashed_direction(x: &DVector<f64>, seed: u64, dim: usize) -> DVector<f64> {
    let mut h = splitmix(seed);
    for v in x.iter() {
        let q = (v * 1e9).round() as i64;
        h = splitmix(h ^ q as u64);
    }
    unit_gaussian(dim, &mut ChaCha8Rng::seed_from_u64(h))
}

/// `u = λ π̂(x) + (1 − λ) π̄(x)` with a fixed `λ`.
pub struct NaiveConvex<A, B> {
    pub black: A,
    pub advice: B,
    pub lambda: f64,
}

pub fn naive_convex_policy<A: Policy, B: Policy>(black: A, advice: B, lambda: f64) -> NaiveConvex<A, B> {
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
    NaiveConvex { black, advice, lambda }
}

impl<A: Policy, B: Policy> Policy for NaiveConvex<A, B> {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        let b = self.black.act(t, x);
        let a = self.advice.act(t, x);
        b * self.lambda + a * (1.0 - self.lambda)
    }
    fn label(&self) -> String {
        format!("naive{}", self.lambda)
    }
    fn is_stateful(&self) -> bool {
        self.black.is_stateful() || self.advice.is_stateful()
    }
}

/// Clamps every action coordinate to `[−limit, limit]`.
#[derive(Debug, Clone)]
pub struct Saturated<P> {
    pub inner: P,
    pub limit: f64,
}

impl<P> Saturated<P> {
    pub fn new(inner: P, limit: f64) -> Self {
        Self { inner, limit }
    }
}

impl<P: Policy> Policy for Saturated<P> {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        self.inner.act(t, x).map(|v| v.clamp(-self.limit, self.limit))
    }
    fn label(&self) -> String {
        self.inner.label()
    }
    fn is_stateful(&self) -> bool {
        self.inner.is_stateful()
    }
}

/// Follows a reference trajectory: `u_t = ū_t − K(x − x̄_t)`, then `−K x`
/// once the reference runs out.
#[derive(Debug, Clone)]
pub struct Tracking {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub gain: DMatrix<f64>,
    label: String,
}

impl Tracking {
    pub fn new(states: Vec<DVector<f64>>, actions: Vec<DVector<f64>>, gain: DMatrix<f64>, label: impl Into<String>) -> Self {
        Self { states, actions, gain, label: label.into() }
    }
}

impl Policy for Tracking {
    fn act(&mut self, t: usize, x: &DVector<f64>) -> DVector<f64> {
        match (self.actions.get(t), self.states.get(t)) {
            (Some(u), Some(xr)) => u - &self.gain * (x - xr),
            _ => -(&self.gain * x),
        }
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Result of probing Def. 1 by sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub epsilon_hat: f64,
    pub samples: usize,
    pub states_tested: String,
}

/// `sup ‖π̂_t(x) − π*_t(x)‖ / ‖x‖` over `(t, x)` pairs drawn by `sampler`.
pub fn measure_epsilon(
    blackbox: &mut dyn Policy,
    optimal: &mut dyn Policy,
    sampler: &mut dyn FnMut(&mut ChaCha8Rng) -> (usize, DVector<f64>),
    samples: usize,
    seed: u64,
    description: &str,
) -> EpsilonReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0_f64;
    let mut used = 0;
    for _ in 0..samples {
        let (t, x) = sampler(&mut rng);
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        used += 1;
        let gap = (blackbox.act(t, &x) - optimal.act(t, &x)).norm();
        best = best.max(gap / norm);
    }
    EpsilonReport { epsilon_hat: best, samples: used, states_tested: description.to_string() }
}

/// Uniform states in a ball of `radius`, times uniform in `0..t_max`.
pub fn ball_sampler(n: usize, radius: f64, t_max: usize) -> impl FnMut(&mut ChaCha8Rng) -> (usize, DVector<f64>) {
    move |rng| {
        use rand::Rng;
        (rng.gen_range(0..t_max.max(1)), crate::plant::ball_point(n, radius, rng))
    }
}
