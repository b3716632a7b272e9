//! Closed-loop simulation of `x_{t+1} = A x_t + B u_t + f_t(x_t, u_t)` with
//! quadratic cost accounting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{op_norm, quad, LinearModel};
use crate::policy::Policy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualKind {
    /// A disturbance sequence `w_t` that ignores state and action.
    TimeOnly,
    /// A genuine model error with `f_t(0, 0) = 0`.
    StateAction,
}

/// The unknown part of the dynamics.
pub trait Residual: Send + Sync {
    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64>;
    /// Declared Lipschitz constant in `(x, u)`.
    fn lipschitz(&self) -> f64;
    fn kind(&self) -> ResidualKind;
}

/// `f ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroResidual {
    pub n: usize,
}

impl Residual for ZeroResidual {
    fn eval(&self, _t: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.n)
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn kind(&self) -> ResidualKind {
        ResidualKind::StateAction
    }
}

/// Known-in-hindsight disturbances; zero past the end of the sequence.
#[derive(Debug, Clone)]
pub struct Disturbance {
    pub w: Vec<DVector<f64>>,
    pub n: usize,
}

impl Disturbance {
    pub fn new(n: usize, w: Vec<DVector<f64>>) -> Self {
        Self { w, n }
    }
}

impl Residual for Disturbance {
    fn eval(&self, t: usize, _x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        self.w.get(t).cloned().unwrap_or_else(|| DVector::zeros(self.n))
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn kind(&self) -> ResidualKind {
        ResidualKind::TimeOnly
    }
}

/// `f(x, u) = E x + G u`, Lipschitz constant `‖[E G]‖`.
#[derive(Debug, Clone)]
pub struct LinearResidual {
    pub e: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl LinearResidual {
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.e.nrows();
        let mut s = DMatrix::zeros(n, self.e.ncols() + self.g.ncols());
        s.columns_mut(0, self.e.ncols()).copy_from(&self.e);
        s.columns_mut(self.e.ncols(), self.g.ncols()).copy_from(&self.g);
        s
    }

    /// Random `E, G` with `‖[E G]‖ = c_ell` exactly.
    pub fn random(n: usize, m: usize, c_ell: f64, rng: &mut impl Rng) -> Self {
        let raw = DMatrix::<f64>::from_fn(n, n + m, |_, _| StandardNormal.sample(rng));
        let norm = op_norm(&raw);
        let scaled = if norm > 0.0 { raw * (c_ell / norm) } else { raw };
        Self {
            e: scaled.columns(0, n).into_owned(),
            g: scaled.columns(n, m).into_owned(),
        }
    }
}

impl Residual for LinearResidual {
    fn eval(&self, _t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.e * x + &self.g * u
    }
    fn lipschitz(&self) -> f64 {
        op_norm(&self.stacked())
    }
    fn kind(&self) -> ResidualKind {
        ResidualKind::StateAction
    }
}

/// `f(x, u) = scale · sin(x)` componentwise.
#[derive(Debug, Clone)]
pub struct SineResidual {
    pub scale: f64,
}

impl Residual for SineResidual {
    fn eval(&self, _t: usize, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.scale * v.sin())
    }
    fn lipschitz(&self) -> f64 {
        self.scale.abs()
    }
    fn kind(&self) -> ResidualKind {
        ResidualKind::StateAction
    }
}

/// Linear model error plus a disturbance sequence.
#[derive(Debug, Clone)]
pub struct AffineResidual {
    pub linear: LinearResidual,
    pub w: Disturbance,
}

impl Residual for AffineResidual {
    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.linear.eval(t, x, u) + self.w.eval(t, x, u)
    }
    fn lipschitz(&self) -> f64 {
        self.linear.lipschitz()
    }
    fn kind(&self) -> ResidualKind {
        if self.w.w.iter().all(|v| v.amax() == 0.0) {
            ResidualKind::StateAction
        } else {
            ResidualKind::TimeOnly
        }
    }
}

type ResidualFn = dyn Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// A closure with a declared Lipschitz constant.
pub struct FnResidual {
    f: Box<ResidualFn>,
    lipschitz: f64,
    kind: ResidualKind,
}

impl FnResidual {
    pub fn new(
        lipschitz: f64,
        kind: ResidualKind,
        f: impl Fn(usize, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f), lipschitz, kind }
    }
}

impl Residual for FnResidual {
    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(t, x, u)
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn kind(&self) -> ResidualKind {
        self.kind
    }
}

/// When a run counts as diverged.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub blowup: f64,
    /// `(coordinate, limit)`: diverged once `|x_i| > limit`.
    pub coordinate_limits: Vec<(usize, f64)>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { blowup: 1e9, coordinate_limits: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    pub residuals: Vec<DVector<f64>>,
    pub step_costs: Vec<f64>,
    pub total_cost: f64,
    /// Set when the run stopped early; the offending state is the last one.
    pub diverged: bool,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory holds x_0")
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }

    /// `x_Tᵀ P x_T`, the cost-to-go of LQR from the last state on the model.
    pub fn terminal_cost(&self, p: &DMatrix<f64>) -> f64 {
        quad(p, self.final_state())
    }

    /// Running cost plus the terminal value `x_Tᵀ P x_T`.
    pub fn cost_with_terminal(&self, p: &DMatrix<f64>) -> f64 {
        self.total_cost + self.terminal_cost(p)
    }

    /// Largest deviation between recorded `x_{t+1}` and `A x_t + B u_t + f_t`.
    pub fn replay_error(&self, model: &LinearModel) -> f64 {
        (0..self.horizon())
            .map(|t| {
                let pred = model.step(&self.states[t], &self.actions[t]) + &self.residuals[t];
                (pred - &self.states[t + 1]).amax()
            })
            .fold(0.0, f64::max)
    }

    /// Bound on the cost beyond the horizon for a loop contracting at `gamma`.
    pub fn tail_bound(&self, weight_norm: f64, c_f: f64, gamma: f64) -> Option<f64> {
        if gamma >= 1.0 {
            return None;
        }
        let xt = self.final_state().norm_squared();
        Some(xt * weight_norm * c_f * c_f * gamma * gamma / (1.0 - gamma * gamma))
    }

    /// CSV with header `t,x_0..,u_0..,step_cost`; the last row holds the
    /// terminal state with empty action and cost fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states[0].len();
        let m = self.actions.first().map_or(0, |u| u.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x_{i}")));
        header.extend((0..m).map(|i| format!("u_{i}")));
        header.push("step_cost".into());
        w.write_record(&header).map_err(csv_err)?;
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            match self.actions.get(t) {
                Some(u) => {
                    row.extend(u.iter().map(|v| v.to_string()));
                    row.push(self.step_costs[t].to_string());
                }
                None => row.extend(std::iter::repeat(String::new()).take(m + 1)),
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::Io(e.to_string())
}

/// Runs `policy` for `horizon` steps from `x0`.
pub fn simulate(
    model: &LinearModel,
    residual: &dyn Residual,
    policy: &mut dyn Policy,
    x0: &DVector<f64>,
    horizon: usize,
) -> Trajectory {
    simulate_with(model, residual, policy, x0, horizon, &SimOptions::default())
}

pub fn simulate_with(
    model: &LinearModel,
    residual: &dyn Residual,
    policy: &mut dyn Policy,
    x0: &DVector<f64>,
    horizon: usize,
    opts: &SimOptions,
) -> Trajectory {
    assert_eq!(x0.len(), model.state_dim(), "x0 dimension");
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut residuals = Vec::with_capacity(horizon);
    let mut step_costs = Vec::with_capacity(horizon);
    let mut diverged = false;
    let mut x = x0.clone();
    states.push(x.clone());
    for t in 0..horizon {
        let u = policy.act(t, &x);
        assert_eq!(u.len(), model.input_dim(), "policy action dimension");
        let f = residual.eval(t, &x, &u);
        let next = model.step(&x, &u) + &f;
        step_costs.push(model.stage_cost(&x, &u));
        actions.push(u);
        residuals.push(f);
        states.push(next.clone());
        x = next;
        let out_of_bounds = opts.coordinate_limits.iter().any(|&(i, lim)| x[i].abs() > lim);
        if !x.iter().all(|v| v.is_finite()) || x.norm() > opts.blowup || out_of_bounds {
            diverged = true;
            break;
        }
    }
    let total_cost = step_costs.iter().sum();
    Trajectory { states, actions, residuals, step_costs, total_cost, diverged }
}

/// `Σ_t x_tᵀQx_t + u_tᵀRu_t` over the recorded steps.
pub fn cost_of(traj: &Trajectory, q: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    traj.actions
        .iter()
        .enumerate()
        .map(|(t, u)| quad(q, &traj.states[t]) + quad(r, u))
        .sum()
}

/// Sampled sup of `‖f(z₁) − f(z₂)‖ / ‖z₁ − z₂‖` with `z = (x, u)` drawn in a
/// ball of `radius`. Half the pairs are independent draws, half are close
/// pairs so that local slopes near any point are probed too.
pub fn estimate_lipschitz(
    residual: &dyn Residual,
    n: usize,
    m: usize,
    samples: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = n + m;
    let mut best = 0.0_f64;
    for k in 0..samples.max(2) {
        let t = rng.gen_range(0..64);
        let z1 = ball_point(dim, radius, &mut rng);
        let z2 = if k % 2 == 0 {
            ball_point(dim, radius, &mut rng)
        } else {
            let scale = radius * 10f64.powf(-rng.gen_range(2.0..5.0));
            &z1 + ball_point(dim, scale, &mut rng)
        };
        let gap = (&z1 - &z2).norm();
        if gap == 0.0 {
            continue;
        }
        let (x1, u1) = (z1.rows(0, n).into_owned(), z1.rows(n, m).into_owned());
        let (x2, u2) = (z2.rows(0, n).into_owned(), z2.rows(n, m).into_owned());
        let diff = residual.eval(t, &x1, &u1) - residual.eval(t, &x2, &u2);
        best = best.max(diff.norm() / gap);
    }
    best
}

/// Uniform point in the Euclidean ball.
pub fn ball_point(dim: usize, radius: f64, rng: &mut impl Rng) -> DVector<f64> {
    let g = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let norm = g.norm();
    if norm == 0.0 {
        return g;
    }
    let r = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
    g * (r / norm)
}
