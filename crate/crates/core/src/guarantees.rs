//! Theorem constants, stability envelopes, optimal-cost oracles and
//! competitive ratios.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, power_series_suffixes, quad, Synthesis};
use crate::plant::{simulate, Disturbance, Residual};
use crate::policy::auxiliary_optimal_policy;

/// Constants of the stability and competitive-ratio statements for one
/// `(C_ℓ, ε)` pair. Constants that need the geometric series in `C_b` are
/// `None` when `rho + C̄ ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremConstants {
    pub c_ell: f64,
    pub epsilon: f64,
    pub c_bar: f64,
    pub gamma: f64,
    pub mu: Option<f64>,
    /// Policy-gap constant `‖π* − π̄‖ ≤ C_a C_ℓ ‖x‖`; enters `μ` and `ε_max`.
    pub c_a_sys: Option<f64>,
    /// The reciprocal form `1/(C_F · C_a)` listed with the other system constants.
    pub c_a_reciprocal: Option<f64>,
    pub c_b_sys: Option<f64>,
    pub c_c_sys: Option<f64>,
    pub cr_model_bar: f64,
    pub eps_max_stability: Option<f64>,
    pub c_ell_max: Option<f64>,
    pub c_f: f64,
    pub rho: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub h_norm: f64,
    pub p_norm: f64,
    pub b_norm: f64,
    pub k_norm: f64,
}

pub fn theorem_constants(syn: &Synthesis, c_ell: f64, epsilon: f64) -> TheoremConstants {
    assert!(c_ell >= 0.0 && epsilon >= 0.0, "C_ell and epsilon must be non-negative");
    let model = &syn.model;
    let (c_f, rho, sigma) = (syn.c_f, syn.rho, syn.sigma);
    let k_norm = op_norm(&syn.k);
    let p_norm = op_norm(&syn.p);
    let b_norm = op_norm(&model.b);
    let f_norm = op_norm(&syn.f);
    let h_norm = op_norm(&syn.h);
    let h_inv_norm = op_norm(&syn.h_inv);
    let pb_norm = op_norm(&(&syn.p * &model.b));
    let pf_norm = op_norm(&(&syn.p * &syn.f));
    let b_plus_i = if model.b.is_square() {
        op_norm(&(&model.b + DMatrix::identity(model.state_dim(), model.state_dim())))
    } else {
        b_norm + 1.0
    };
    let stage_norm = op_norm(&(&model.q + syn.k.transpose() * &model.r * &syn.k));

    let c_bar = c_ell * (1.0 + k_norm);
    let gamma = rho + c_f * c_ell * (1.0 + k_norm);
    let r = rho + c_bar;
    let c_b = (r < 1.0).then(|| {
        2.0 * c_f * c_f * p_norm * r * (rho + 1.0 + k_norm) / (1.0 - r * r) * (stage_norm / sigma).sqrt()
    });
    let base = pf_norm + (1.0 + k_norm) * (pb_norm + p_norm);
    let c_a = c_b.map(|cb| 2.0 * h_inv_norm * (base + 0.5 * cb * b_plus_i * (2.0 + f_norm + k_norm)));
    let c_a_reciprocal = c_b.map(|cb| 1.0 / (2.0 * c_f * h_inv_norm * (base + 0.5 * cb * b_plus_i * (1.0 + f_norm + k_norm))));
    let c_c = c_b.map(|cb| h_norm / (4.0 * pb_norm + 2.0 * p_norm + cb * (b_norm + 1.0) * b_norm));
    let mu = c_a.map(|ca| c_f * (epsilon * (c_ell + b_norm) + ca * c_ell));
    let cr_model_bar = 2.0 * syn.kappa * (c_f * p_norm / (1.0 - rho)).powi(2) / sigma;
    let eps_max = c_a.map(|ca| (sigma / (2.0 * h_norm)).min((1.0 / c_f - ca * c_ell) / (c_ell + b_norm)));
    let c_ell_max = match (c_a, c_c) {
        (Some(ca), Some(cc)) => Some(1f64.min(1.0 / (c_f * ca)).min(cc).min((1.0 - rho) / (c_f * (1.0 + k_norm)))),
        _ => None,
    };
    TheoremConstants {
        c_ell,
        epsilon,
        c_bar,
        gamma,
        mu,
        c_a_sys: c_a,
        c_a_reciprocal,
        c_b_sys: c_b,
        c_c_sys: c_c,
        cr_model_bar,
        eps_max_stability: eps_max,
        c_ell_max,
        c_f,
        rho,
        sigma,
        kappa: syn.kappa,
        h_norm,
        p_norm,
        b_norm,
        k_norm,
    }
}

impl TheoremConstants {
    pub fn applicable(&self) -> bool {
        self.c_b_sys.is_some()
    }

    /// Hypotheses of the stability and competitive-ratio statements that fail.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.eps_max_stability {
            Some(e) if self.epsilon < e => {}
            Some(e) => out.push(format!("epsilon {} >= eps_max {e:.6e}", self.epsilon)),
            None => out.push("eps_max undefined (rho + C_bar >= 1)".into()),
        }
        match self.c_ell_max {
            Some(c) if self.c_ell < c => {}
            Some(c) => out.push(format!("C_ell {} >= C_ell_max {c:.6e}", self.c_ell)),
            None => out.push("C_ell_max undefined (rho + C_bar >= 1)".into()),
        }
        out
    }

    /// `(C_F + μ/γ) / (1 − μ/γ)` when `μ < γ`; the statement is silent otherwise.
    pub fn envelope_prefactor(&self) -> Option<f64> {
        let mu = self.mu?;
        let ratio = mu / self.gamma;
        (ratio < 1.0).then(|| (self.c_f + ratio) / (1.0 - ratio))
    }
}

/// Largest `C_ℓ` below `C_ℓ_max` at which `μ < γ` holds with `ε = 0`, so the
/// envelope prefactor exists. Found by bisection; `μ/γ` grows with `C_ℓ`.
pub fn envelope_c_ell_limit(syn: &Synthesis) -> Option<f64> {
    let c_max = theorem_constants(syn, 0.0, 0.0).c_ell_max?;
    let defined = |c: f64| theorem_constants(syn, c, 0.0).envelope_prefactor().is_some();
    if defined(c_max * (1.0 - 1e-12)) {
        return Some(c_max);
    }
    let (mut lo, mut hi) = (0.0, c_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if defined(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Largest `ε` at this `C_ℓ` that satisfies the stability precondition and
/// keeps `μ < γ`.
pub fn envelope_eps_limit(syn: &Synthesis, c_ell: f64) -> Option<f64> {
    let c = theorem_constants(syn, c_ell, 0.0);
    let (eps_max, c_a) = (c.eps_max_stability?, c.c_a_sys?);
    let mu_gamma = (c.gamma / c.c_f - c_a * c_ell) / (c_ell + c.b_norm);
    let limit = eps_max.min(mu_gamma);
    (limit > 0.0).then_some(limit)
}

impl fmt::Display for TheoremConstants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
        writeln!(f, "C_ell             {:.6e}", self.c_ell)?;
        writeln!(f, "epsilon           {:.6e}", self.epsilon)?;
        writeln!(f, "C_F               {:.6e}", self.c_f)?;
        writeln!(f, "rho               {:.6e}", self.rho)?;
        writeln!(f, "gamma             {:.6e}", self.gamma)?;
        writeln!(f, "mu                {}", opt(self.mu))?;
        writeln!(f, "C_a_sys           {}", opt(self.c_a_sys))?;
        writeln!(f, "C_a_reciprocal    {}", opt(self.c_a_reciprocal))?;
        writeln!(f, "C_b_sys           {}", opt(self.c_b_sys))?;
        writeln!(f, "C_c_sys           {}", opt(self.c_c_sys))?;
        writeln!(f, "CR_model_bar      {:.6e}", self.cr_model_bar)?;
        writeln!(f, "eps_max_stability {}", opt(self.eps_max_stability))?;
        write!(f, "C_ell_max         {}", opt(self.c_ell_max))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub decay_gamma_hat: f64,
    pub envelope_c_hat: f64,
    /// `None` without predicted constants or when `μ ≥ γ`.
    pub satisfied: Option<bool>,
    pub predicted_prefactor: Option<f64>,
    pub predicted_gamma: Option<f64>,
    /// Largest `‖x_t‖ / (C γᵗ ‖x₀‖)` against the prediction.
    pub worst_ratio: Option<f64>,
    pub t0: Option<usize>,
    pub degenerate: bool,
}

/// Threshold under which states are left out of the log-linear fit.
pub const FIT_FLOOR: f64 = 1e-12;

pub fn fit_stability_envelope(states: &[DVector<f64>], predicted: Option<&TheoremConstants>) -> Result<StabilityReport> {
    if states.len() < 11 {
        return Err(Error::Validation(format!("need at least 10 steps, have {}", states.len().saturating_sub(1))));
    }
    let norms: Vec<f64> = states.iter().map(|x| x.norm()).collect();
    let x0 = norms[0];
    if !(x0 > 0.0) {
        return Err(Error::Validation("initial state is zero".into()));
    }
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > FIT_FLOOR && v.is_finite())
        .map(|(t, &v)| (t as f64, v.ln()))
        .collect();
    let degenerate = pts.len() < 2;
    let decay = if degenerate {
        0.0
    } else {
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let ml = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        (cov / var).exp()
    };
    let envelope_c_hat = if decay > 0.0 {
        norms
            .iter()
            .enumerate()
            .map(|(t, &v)| v / (decay.powi(t as i32) * x0))
            .filter(|r| r.is_finite())
            .fold(0.0, f64::max)
    } else {
        1.0
    };
    let (mut satisfied, mut worst, mut pref, mut pgamma) = (None, None, None, None);
    if let Some(c) = predicted {
        pgamma = Some(c.gamma);
        if let Some(cp) = c.envelope_prefactor() {
            pref = Some(cp);
            let w = norms
                .iter()
                .enumerate()
                .map(|(t, &v)| v / (cp * c.gamma.powi(t as i32) * x0))
                .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
            worst = Some(w);
            satisfied = Some(w <= 1.0 + 1e-12);
        }
    }
    Ok(StabilityReport {
        decay_gamma_hat: decay,
        envelope_c_hat,
        satisfied,
        predicted_prefactor: pref,
        predicted_gamma: pgamma,
        worst_ratio: worst,
        t0: None,
        degenerate,
    })
}

/// Optimal cost of the linear plant with known disturbances, from
/// simulation and from the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptCost {
    pub simulated: f64,
    pub closed_form: f64,
}

impl OptCost {
    pub fn value(&self) -> f64 {
        self.simulated
    }

    pub fn relative_gap(&self) -> f64 {
        (self.simulated - self.closed_form).abs() / self.closed_form.abs().max(1e-300)
    }
}

/// Exact optimum over horizon `T = w.len()` with terminal value `x_Tᵀ P x_T`.
pub fn opt_cost_time_only(syn: &Synthesis, w: &[DVector<f64>], x0: &DVector<f64>) -> OptCost {
    let n = syn.model.state_dim();
    let mut pol = auxiliary_optimal_policy(syn, w);
    let traj = simulate(&syn.model, &Disturbance::new(n, w.to_vec()), &mut pol, x0, w.len());
    let simulated = traj.cost_with_terminal(&syn.p);
    OptCost { simulated, closed_form: optimal_cost_closed_form(syn, w, x0) }
}

/// `x₀ᵀPx₀ + 2x₀ᵀFᵀS₀ + Σ_t (w_tᵀPw_t + 2w_tᵀFᵀS_{t+1} − S_tᵀBH⁻¹BᵀS_t)`.
pub fn optimal_cost_closed_form(syn: &Synthesis, w: &[DVector<f64>], x0: &DVector<f64>) -> f64 {
    let s = power_series_suffixes(&syn.f, &syn.p, w);
    let ft = syn.f.transpose();
    let gain = syn.bh_inv_bt();
    let mut total = quad(&syn.p, x0) + 2.0 * x0.dot(&(&ft * &s[0]));
    for (t, wt) in w.iter().enumerate() {
        total += quad(&syn.p, wt) + 2.0 * wt.dot(&(&ft * &s[t + 1])) - quad(&gain, &s[t]);
    }
    total
}

#[derive(Debug, Clone, Copy)]
pub struct TrajoptOptions {
    pub iterations: usize,
    pub memory: usize,
    /// Stop when `‖∇J‖ ≤ tolerance · (1 + |J|)`.
    pub tolerance: f64,
    pub fd_step: f64,
    /// Keeps every action coordinate inside `(−b, b)` through `u = b·tanh(v/b)`,
    /// so a saturating plant is optimized on its smooth interior.
    pub action_bound: Option<f64>,
}

impl Default for TrajoptOptions {
    fn default() -> Self {
        Self { iterations: 500, memory: 12, tolerance: 1e-10, fd_step: 1e-6, action_bound: None }
    }
}

#[derive(Debug, Clone)]
pub struct TrajoptResult {
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub no_improvement: bool,
    pub states: Vec<DVector<f64>>,
    pub actions: Vec<DVector<f64>>,
    /// Accepted cost after every iteration; non-increasing.
    pub history: Vec<f64>,
    pub gradient_norm: f64,
}

struct Rollout {
    states: Vec<DVector<f64>>,
    cost: f64,
}

fn rollout(syn: &Synthesis, residual: &dyn Residual, x0: &DVector<f64>, u: &[DVector<f64>]) -> Rollout {
    let model = &syn.model;
    let mut states = Vec::with_capacity(u.len() + 1);
    let mut x = x0.clone();
    let mut cost = 0.0;
    states.push(x.clone());
    for (t, ut) in u.iter().enumerate() {
        cost += model.stage_cost(&x, ut);
        x = model.step(&x, ut) + residual.eval(t, &x, ut);
        states.push(x.clone());
    }
    cost += quad(&syn.p, &x);
    if !cost.is_finite() {
        cost = f64::INFINITY;
    }
    Rollout { states, cost }
}

/// Adjoint gradient with central-difference Jacobians of the residual.
fn gradient(syn: &Synthesis, residual: &dyn Residual, roll: &Rollout, u: &[DVector<f64>], h: f64) -> Vec<DVector<f64>> {
    let model = &syn.model;
    let (n, m) = (model.state_dim(), model.input_dim());
    let mut costate = &syn.p * roll.states[u.len()].clone() * 2.0;
    let mut grad = vec![DVector::zeros(m); u.len()];
    for t in (0..u.len()).rev() {
        let x = &roll.states[t];
        let mut jx = model.a.clone();
        let mut ju = model.b.clone();
        for i in 0..n {
            let step = h * (1.0 + x[i].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += step;
            xm[i] -= step;
            let d = (residual.eval(t, &xp, &u[t]) - residual.eval(t, &xm, &u[t])) / (2.0 * step);
            { let mut col = jx.column_mut(i); col += &d; }
        }
        for j in 0..m {
            let step = h * (1.0 + u[t][j].abs());
            let mut up = u[t].clone();
            let mut um = u[t].clone();
            up[j] += step;
            um[j] -= step;
            let d = (residual.eval(t, x, &up) - residual.eval(t, x, &um)) / (2.0 * step);
            { let mut col = ju.column_mut(j); col += &d; }
        }
        grad[t] = &model.r * &u[t] * 2.0 + ju.transpose() * &costate;
        costate = &model.q * x * 2.0 + jx.transpose() * &costate;
    }
    grad
}

fn dot(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(a: &[DVector<f64>], s: f64, d: &[DVector<f64>]) -> Vec<DVector<f64>> {
    a.iter().zip(d).map(|(x, y)| x + y * s).collect()
}

/// Hindsight trajectory optimization over `u_0..u_{T−1}` by L-BFGS with
/// Armijo backtracking, started from the LQR rollout on the true plant.
/// The objective carries the terminal value `x_Tᵀ P x_T`.
pub fn opt_cost_trajopt(
    syn: &Synthesis,
    residual: &dyn Residual,
    x0: &DVector<f64>,
    horizon: usize,
    opts: TrajoptOptions,
) -> TrajoptResult {
    let mut lqr = crate::policy::lqr_policy(syn);
    let init = simulate(&syn.model, residual, &mut lqr, x0, horizon);
    let mut u: Vec<DVector<f64>> = init.actions;
    u.resize(horizon, DVector::zeros(syn.model.input_dim()));
    opt_cost_trajopt_from(syn, residual, x0, u, opts)
}

/// Same as [`opt_cost_trajopt`] but started from the given actions.
pub fn opt_cost_trajopt_from(
    syn: &Synthesis,
    residual: &dyn Residual,
    x0: &DVector<f64>,
    initial_actions: Vec<DVector<f64>>,
    opts: TrajoptOptions,
) -> TrajoptResult {
    let bound = opts.action_bound;
    let to_u = |v: &[DVector<f64>]| -> Vec<DVector<f64>> {
        match bound {
            Some(b) => v.iter().map(|vt| vt.map(|c| b * (c / b).tanh())).collect(),
            None => v.to_vec(),
        }
    };
    // chain rule through the bound map
    let grad_v = |roll: &Rollout, v: &[DVector<f64>]| -> Vec<DVector<f64>> {
        let g = gradient(syn, residual, roll, &to_u(v), opts.fd_step);
        match bound {
            Some(b) => g.iter().zip(v).map(|(gt, vt)| gt.component_mul(&vt.map(|c| 1.0 / (c / b).cosh().powi(2)))).collect(),
            None => g,
        }
    };
    let mut u: Vec<DVector<f64>> = match bound {
        Some(b) => initial_actions.iter().map(|ut| ut.map(|c| b * (c / b).clamp(-0.999, 0.999).atanh())).collect(),
        None => initial_actions,
    };
    let mut roll = rollout(syn, residual, x0, &to_u(&u));
    let initial_cost = roll.cost;
    let mut g = grad_v(&roll, &u);
    let mut s_hist: Vec<Vec<DVector<f64>>> = Vec::new();
    let mut y_hist: Vec<Vec<DVector<f64>>> = Vec::new();
    let mut history = vec![roll.cost];
    let mut converged = false;
    let mut iterations = 0;
    let mut stalls = 0;
    for _ in 0..opts.iterations {
        let gnorm = dot(&g, &g).sqrt();
        if !roll.cost.is_finite() || gnorm <= opts.tolerance * (1.0 + roll.cost.abs()) {
            converged = roll.cost.is_finite();
            break;
        }
        iterations += 1;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push((a, rho));
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let scale = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y), (a, rho)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q = axpy(&q, a - b, s);
        }
        let mut dir: Vec<DVector<f64>> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
            s_hist.clear();
            y_hist.clear();
        }
        let mut step = if s_hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let cand = axpy(&u, step, &dir);
            let r = rollout(syn, residual, x0, &to_u(&cand));
            if r.cost <= roll.cost + 1e-4 * step * slope {
                accepted = Some((cand, r));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, r)) = accepted else {
            converged = true;
            break;
        };
        let improvement = roll.cost - r.cost;
        let g_new = grad_v(&r, &cand);
        let s: Vec<_> = cand.iter().zip(&u).map(|(a, b)| a - b).collect();
        let y: Vec<_> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-14 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        u = cand;
        roll = r;
        g = g_new;
        history.push(roll.cost);
        stalls = if improvement <= 1e-15 * roll.cost.abs().max(1e-300) { stalls + 1 } else { 0 };
        if stalls >= 5 {
            converged = true;
            break;
        }
    }
    let gradient_norm = dot(&g, &g).sqrt();
    TrajoptResult {
        cost: roll.cost,
        initial_cost,
        iterations,
        converged,
        no_improvement: !(roll.cost < initial_cost),
        states: roll.states,
        actions: to_u(&u),
        history,
        gradient_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptMethod {
    ExactTimeOnly,
    TrajoptApprox,
}

impl OptMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OptMethod::ExactTimeOnly => "exact_time_only",
            OptMethod::TrajoptApprox => "trajopt_approx",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompetitiveReport {
    pub alg_cost: f64,
    pub opt_cost: f64,
    pub ratio: f64,
    pub opt_method: OptMethod,
    pub bound_value: Option<f64>,
}

pub fn competitive_ratio(alg_cost: f64, opt_cost: f64, method: OptMethod) -> Result<CompetitiveReport> {
    if !(opt_cost > 1e-15) {
        return Err(Error::DegenerateOpt(opt_cost));
    }
    Ok(CompetitiveReport { alg_cost, opt_cost, ratio: alg_cost / opt_cost, opt_method: method, bound_value: None })
}

impl CompetitiveReport {
    pub const CSV_HEADER: &'static str = "alg_cost,opt_cost,ratio,opt_method,bound_value";

    pub fn csv_row(&self) -> String {
        let bound = self.bound_value.map(|b| b.to_string()).unwrap_or_default();
        format!("{},{},{},{},{}", self.alg_cost, self.opt_cost, self.ratio, self.opt_method.as_str(), bound)
    }
}

impl fmt::Display for CompetitiveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ALG {:.6e}  OPT {:.6e} ({})  ratio {:.9}", self.alg_cost, self.opt_cost, self.opt_method.as_str(), self.ratio)?;
        if let Some(b) = self.bound_value {
            write!(f, "  bound {b:.6e}")?;
        }
        Ok(())
    }
}

/// The constants the competitive-ratio bound leaves implicit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCalibration {
    pub c2: f64,
    pub c3: f64,
}

impl BoundCalibration {
    /// `c₂ = 2‖H‖·max{2/σ, C_F²‖P‖²κ/(σ(1−rho)²)}`, `c₃ = 0` until calibrated.
    pub fn from_constants(c: &TheoremConstants) -> Self {
        let a = 2.0 / c.sigma;
        let b = c.c_f.powi(2) * c.p_norm.powi(2) * c.kappa / (c.sigma * (1.0 - c.rho).powi(2));
        Self { c2: 2.0 * c.h_norm * a.max(b), c3: 0.0 }
    }

    /// Smallest `c₃` making the bound hold for one observed run.
    pub fn calibrate_c3(mut self, c: &TheoremConstants, ratio: f64, lambda_limit: f64, x0_norm: f64) -> Self {
        let base = bound_value(c, &Self { c3: 0.0, ..self }, lambda_limit, x0_norm);
        let scale = c.c_ell * x0_norm;
        if scale > 0.0 && ratio > base {
            self.c3 = (ratio - base) / scale;
        }
        self
    }
}

/// `(1−λ)·CR̄ + c₂/(1 − 2‖H‖ε/σ) + c₃·C_ℓ·‖x₀‖`.
pub fn bound_value(c: &TheoremConstants, cal: &BoundCalibration, lambda_limit: f64, x0_norm: f64) -> f64 {
    let shrink = 1.0 - 2.0 * c.h_norm * c.epsilon / c.sigma;
    (1.0 - lambda_limit) * c.cr_model_bar + cal.c2 / shrink + cal.c3 * c.c_ell * x0_norm
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub bound: f64,
    pub ratio: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn verify_bounds(
    constants: &TheoremConstants,
    report: &CompetitiveReport,
    lambda_limit: f64,
    x0_norm: f64,
    calibration: &BoundCalibration,
) -> Result<BoundCheck> {
    let violations = constants.violations();
    if !violations.is_empty() {
        return Err(Error::PreconditionViolated(violations));
    }
    let bound = bound_value(constants, calibration, lambda_limit, x0_norm);
    Ok(BoundCheck { bound, ratio: report.ratio, margin: bound - report.ratio, holds: report.ratio <= bound })
}
