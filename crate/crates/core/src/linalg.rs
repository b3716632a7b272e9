//! Dense linear algebra for the crude model: Riccati solution, LQR gain,
//! spectral quantities and the decay envelope `‖Fᵗ‖ ≤ C_F·rhoᵗ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default horizon over which the decay prefactor `C_F` is measured.
pub const DEFAULT_T_CHECK: usize = 500;

/// The crude linear model `(A, B, Q, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LinearModel {
    /// Validates shapes, symmetry and positive definiteness of `Q` and `R`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}, expected square", a.nrows(), a.ncols())));
        }
        let m = b.ncols();
        if b.nrows() != n || m == 0 {
            return Err(Error::Dimension(format!("B is {}x{}, expected {n}xm", b.nrows(), b.ncols())));
        }
        if q.shape() != (n, n) {
            return Err(Error::Dimension(format!("Q is {:?}, expected {n}x{n}", q.shape())));
        }
        if r.shape() != (m, m) {
            return Err(Error::Dimension(format!("R is {:?}, expected {m}x{m}", r.shape())));
        }
        for (name, s) in [("Q", &q), ("R", &r)] {
            if !is_symmetric(s, 1e-10) {
                return Err(Error::InvalidModel(format!("{name} is not symmetric")));
            }
            let min = min_symmetric_eigenvalue(s);
            if !(min > 0.0) {
                return Err(Error::InvalidModel(format!("{name} is not positive definite (min eigenvalue {min:e})")));
            }
        }
        Ok(Self { a, b, q, r })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A x + B u`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `xᵀQx + uᵀRu`.
    pub fn stage_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        quad(&self.q, x) + quad(&self.r, u)
    }
}

/// Stopping rule and iteration budget for the Riccati fixed point.
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self { max_iterations: 10_000, tolerance: 1e-12 }
    }
}

/// Everything derived from the model that the rest of the crate consumes.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub model: LinearModel,
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub h_inv: DMatrix<f64>,
    /// `ρ(F)` itself.
    pub spectral_radius_f: f64,
    /// `(1 + ρ(F)) / 2`.
    pub rho: f64,
    pub c_f: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub t_check: usize,
    pub dare_iterations: usize,
}

impl Synthesis {
    /// `H⁻¹Bᵀ`, the map from a costate to an action correction.
    pub fn h_inv_bt(&self) -> DMatrix<f64> {
        &self.h_inv * self.model.b.transpose()
    }

    /// `B H⁻¹ Bᵀ`, the weighting under which feedforward terms are compared.
    pub fn bh_inv_bt(&self) -> DMatrix<f64> {
        &self.model.b * &self.h_inv * self.model.b.transpose()
    }

    pub fn dare_residual(&self) -> f64 {
        dare_residual(&self.model, &self.p)
    }
}

/// Riccati fixed point `P ← Q + AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA` from `P₀ = Q`.
pub fn solve_dare(model: &LinearModel) -> Result<DMatrix<f64>> {
    solve_dare_with(model, DareOptions::default()).map(|(p, _)| p)
}

/// As [`solve_dare`], also returning the iteration count.
pub fn solve_dare_with(model: &LinearModel, opts: DareOptions) -> Result<(DMatrix<f64>, usize)> {
    let (a, b) = (&model.a, &model.b);
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = model.q.clone();
    for it in 1..=opts.max_iterations {
        let pb = &p * b;
        let h = &model.r + &bt * &pb;
        let bpa = pb.transpose() * a;
        let gain = solve_spd(&h, &bpa).ok_or(Error::NonStabilizable { iterations: it })?;
        let mut next = &model.q + &at * &p * a - bpa.transpose() * gain;
        symmetrize(&mut next);
        let scale = inf_norm(&p);
        let delta = inf_norm(&(&next - &p));
        if !delta.is_finite() || scale > 1e14 {
            return Err(Error::NonStabilizable { iterations: it });
        }
        p = next;
        if delta <= opts.tolerance * (1.0 + scale) {
            return Ok((p, it));
        }
    }
    Err(Error::NonStabilizable { iterations: opts.max_iterations })
}

/// Infinity-norm of the Riccati residual at `p`.
pub fn dare_residual(model: &LinearModel, p: &DMatrix<f64>) -> f64 {
    let (a, b) = (&model.a, &model.b);
    let pb = p * b;
    let h = &model.r + b.transpose() * &pb;
    let bpa = pb.transpose() * a;
    let rhs = match solve_spd(&h, &bpa) {
        Some(g) => &model.q + a.transpose() * p * a - bpa.transpose() * g,
        None => return f64::INFINITY,
    };
    inf_norm(&(p - rhs))
}

pub fn synthesize(model: &LinearModel) -> Result<Synthesis> {
    synthesize_with(model, DareOptions::default(), DEFAULT_T_CHECK)
}

pub fn synthesize_with(model: &LinearModel, opts: DareOptions, t_check: usize) -> Result<Synthesis> {
    let (p, dare_iterations) = solve_dare_with(model, opts)?;
    let b = &model.b;
    let mut h = &model.r + b.transpose() * &p * b;
    symmetrize(&mut h);
    let h_inv = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidModel("R + BᵀPB is not positive definite".into()))?
        .inverse();
    let k = &h_inv * b.transpose() * &p * &model.a;
    let f = &model.a - b * &k;
    let spectral_radius_f = spectral_radius(&f);
    if spectral_radius_f >= 1.0 {
        return Err(Error::NonStabilizable { iterations: dare_iterations });
    }
    let rho = 0.5 * (1.0 + spectral_radius_f);
    let c_f = decay_prefactor(&f, rho, t_check);
    let kappa = 2.0_f64.max(op_norm(&model.a)).max(op_norm(b));
    let sigma = min_symmetric_eigenvalue(&model.q).min(min_symmetric_eigenvalue(&model.r));
    Ok(Synthesis {
        model: model.clone(),
        p,
        k,
        f,
        h,
        h_inv,
        spectral_radius_f,
        rho,
        c_f,
        kappa,
        sigma,
        t_check,
        dare_iterations,
    })
}

/// `max_{0≤t≤T} ‖Fᵗ‖ / rhoᵗ`, never below one.
pub fn decay_prefactor(f: &DMatrix<f64>, rho: f64, t_check: usize) -> f64 {
    let n = f.nrows();
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut scale = 1.0;
    let mut best = 1.0_f64;
    for _ in 1..=t_check {
        power = &power * f;
        scale *= rho;
        let norm = op_norm(&power);
        if norm == 0.0 {
            break;
        }
        best = best.max(norm / scale);
    }
    best
}

/// Largest eigenvalue modulus. Real Schur form first; a Gelfand-formula
/// estimate if the QR sweep fails to converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    assert!(m.is_square(), "spectral_radius needs a square matrix");
    if m.nrows() == 0 {
        return 0.0;
    }
    if let Some(schur) = m.clone().try_schur(f64::EPSILON, 100_000) {
        return schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    gelfand_estimate(m)
}

fn gelfand_estimate(m: &DMatrix<f64>) -> f64 {
    let mut power = m.clone();
    let mut log_scale = 0.0;
    let mut k = 1.0;
    for _ in 0..12 {
        let norm = op_norm(&power);
        if norm == 0.0 {
            return 0.0;
        }
        power /= norm;
        log_scale += norm.ln();
        power = &power * &power;
        log_scale *= 2.0;
        k *= 2.0;
    }
    ((log_scale + op_norm(&power).ln()) / k).exp()
}

/// `Σ_{τ=s}^{t} (Fᵀ)^{τ−s} P f_τ` by backward Horner accumulation; entries of
/// `seq` past its end count as zero.
pub fn matrix_power_series(
    f: &DMatrix<f64>,
    p: &DMatrix<f64>,
    seq: &[DVector<f64>],
    s: usize,
    t: usize,
) -> Result<DVector<f64>> {
    if s > t {
        return Err(Error::IndexRange { s, t });
    }
    let n = f.nrows();
    let ft = f.transpose();
    let last = t.min(seq.len().saturating_sub(1));
    let mut acc = DVector::zeros(n);
    if seq.is_empty() || s > last {
        return Ok(acc);
    }
    for tau in (s..=last).rev() {
        acc = &ft * acc + p * &seq[tau];
    }
    Ok(acc)
}

/// All suffix sums `S_s = Σ_{τ≥s} (Fᵀ)^{τ−s} P f_τ` for `s = 0..=len`
/// (the last entry is zero).
pub fn power_series_suffixes(f: &DMatrix<f64>, p: &DMatrix<f64>, seq: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = f.nrows();
    let ft = f.transpose();
    let mut out = vec![DVector::zeros(n); seq.len() + 1];
    for s in (0..seq.len()).rev() {
        out[s] = &ft * &out[s + 1] + p * &seq[s];
    }
    out
}

/// Moore–Penrose inverse via the SVD with a relative singular-value cutoff.
pub fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * f64::EPSILON * r.max(c) as f64;
    svd.pseudo_inverse(cutoff.max(f64::MIN_POSITIVE))
        .expect("svd computed with both factors")
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Maximum absolute row sum.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn min_symmetric_eigenvalue(s: &DMatrix<f64>) -> f64 {
    s.clone().symmetric_eigen().eigenvalues.min()
}

pub fn is_symmetric(s: &DMatrix<f64>, tol: f64) -> bool {
    s.is_square() && (s - s.transpose()).amax() <= tol * (1.0 + s.amax())
}

pub fn symmetrize(s: &mut DMatrix<f64>) {
    let t = s.transpose();
    *s += t;
    *s *= 0.5;
}

/// `vᵀ M v`.
pub fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

fn solve_spd(h: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match h.clone().cholesky() {
        Some(c) => Some(c.solve(rhs)),
        None => h.clone().lu().solve(rhs),
    }
}
