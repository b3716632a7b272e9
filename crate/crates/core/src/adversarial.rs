//! Two individually stabilizing gains whose fixed convex combination is
//! unstable.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{spectral_radius, LinearModel};
use crate::plant::{simulate, Trajectory, ZeroResidual};
use crate::policy::{naive_convex_policy, LinearFeedback};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstructionCase {
    /// `F₁` has a nonzero off-diagonal entry.
    OffDiagonal,
    /// `F₁` is diagonal with two distinct entries.
    Diagonal2x2Embedded,
}

impl ConstructionCase {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstructionCase::OffDiagonal => "off_diagonal",
            ConstructionCase::Diagonal2x2Embedded => "diagonal_2x2_embedded",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdversarialCertificate {
    pub model: LinearModel,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub rho_f1: f64,
    pub rho_f2: f64,
    pub rho_combined: f64,
    pub construction_case: ConstructionCase,
    /// Whether `F₁` was transposed to put its nonzero entry above the diagonal.
    pub transposed: bool,
    /// `(row, col)` of the singleton entry, in the original orientation.
    pub singleton: Option<(usize, usize)>,
}

impl AdversarialCertificate {
    /// `A − B(λK₂ + (1−λ)K₁)`.
    pub fn combined_closed_loop(&self) -> DMatrix<f64> {
        let gain = &self.k2 * self.lambda + &self.k1 * (1.0 - self.lambda);
        &self.model.a - &self.model.b * gain
    }

    pub fn is_valid(&self) -> bool {
        self.rho_f1 < 1.0 && self.rho_f2 < 1.0 && self.rho_combined > 1.0
    }
}

fn fmt_matrix(f: &mut fmt::Formatter<'_>, name: &str, m: &DMatrix<f64>) -> fmt::Result {
    writeln!(f, "{name} =")?;
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
        writeln!(f, "  [{}]", cells.join(" "))?;
    }
    Ok(())
}

impl fmt::Display for AdversarialCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "case           {}", self.construction_case.as_str())?;
        writeln!(f, "lambda         {}", self.lambda)?;
        writeln!(f, "beta           {}", self.beta)?;
        writeln!(f, "transposed     {}", self.transposed)?;
        fmt_matrix(f, "K1", &self.k1)?;
        fmt_matrix(f, "K2", &self.k2)?;
        fmt_matrix(f, "F1", &self.f1)?;
        fmt_matrix(f, "F2", &self.f2)?;
        writeln!(f, "rho(F1)        {:.9}", self.rho_f1)?;
        writeln!(f, "rho(F2)        {:.9}", self.rho_f2)?;
        writeln!(f, "rho(combined)  {:.9}", self.rho_combined)?;
        write!(f, "valid          {}", self.is_valid())
    }
}

/// Builds `K₂` with `ρ(A − BK₂) < 1` and `ρ(A − B(λK₂ + (1−λ)K₁)) > 1`.
pub fn construct_adversarial_k2(model: &LinearModel, k1: &DMatrix<f64>, lambda: f64, beta: f64) -> Result<AdversarialCertificate> {
    let n = model.state_dim();
    if model.b.shape() != (n, n) || n < 2 {
        return Err(Error::Dimension(format!("need square B with n > 1, got {:?}", model.b.shape())));
    }
    if !(lambda > 0.0 && lambda < 1.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Validation(format!("need 0 < lambda, beta < 1 (lambda {lambda}, beta {beta})")));
    }
    let sv = model.b.singular_values();
    if !(sv.min() > 1e-12 * sv.max()) {
        return Err(Error::SingularB);
    }
    let f1 = &model.a - &model.b * k1;
    let rho_f1 = spectral_radius(&f1);
    if !(rho_f1 < 1.0) {
        return Err(Error::Validation(format!("K1 is not stabilizing (rho {rho_f1})")));
    }
    let scale = f1.amax();
    if scale == 0.0 {
        return Err(Error::NotApplicable("A - B K1 = 0".into()));
    }
    let tol = 1e-14 * scale;
    let upper = (0..n).any(|i| (i + 1..n).any(|j| f1[(i, j)].abs() > tol));
    let lower = (0..n).any(|i| (0..i).any(|j| f1[(i, j)].abs() > tol));
    let (f2, case, transposed, singleton) = if upper || lower {
        let oriented = if upper { f1.clone() } else { f1.transpose() };
        let (f2, (r, c)) = off_diagonal_construction(&oriented, lambda, beta, tol)?;
        if upper {
            (f2, ConstructionCase::OffDiagonal, false, Some((r, c)))
        } else {
            (f2.transpose(), ConstructionCase::OffDiagonal, true, Some((c, r)))
        }
    } else {
        (diagonal_construction(&f1, lambda)?, ConstructionCase::Diagonal2x2Embedded, false, None)
    };
    let b_lu = model.b.clone().lu();
    let k2 = b_lu.solve(&(&model.a - &f2)).ok_or(Error::SingularB)?;
    let mut cert = AdversarialCertificate {
        model: model.clone(),
        k1: k1.clone(),
        k2,
        lambda,
        beta,
        f1,
        rho_f2: spectral_radius(&f2),
        f2,
        rho_f1,
        rho_combined: 0.0,
        construction_case: case,
        transposed,
        singleton,
    };
    cert.rho_combined = spectral_radius(&cert.combined_closed_loop());
    if !cert.is_valid() {
        return Err(Error::NotApplicable(format!(
            "self-check failed: rho(F1) {:.6}, rho(F2) {:.6}, rho(combined) {:.6}",
            cert.rho_f1, cert.rho_f2, cert.rho_combined
        )));
    }
    Ok(cert)
}

/// `F₂ = βI − ((1−λ)/λ)L̄ + S e_{i+k} e_iᵀ` for `F₁` with a nonzero entry above
/// the diagonal. The combination `λF₂ + (1−λ)F₁` is then upper triangular
/// apart from the singleton, and `S` is solved from
/// `det(T + λS e_p e_qᵀ) = det T + λS·cof_{pq}(T)` so that the determinant
/// has modulus `2ⁿ`, forcing a spectral radius of at least 2.
fn off_diagonal_construction(f1: &DMatrix<f64>, lambda: f64, beta: f64, tol: f64) -> Result<(DMatrix<f64>, (usize, usize))> {
    let n = f1.nrows();
    let mut pivot = None;
    'search: for k in 1..n {
        for i in 0..n - k {
            if f1[(i, i + k)].abs() > tol {
                pivot = Some((i, k));
                break 'search;
            }
        }
    }
    let (i, k) = pivot.expect("caller checked an upper entry exists");
    let (row, col) = (i + k, i);
    let mut f2 = DMatrix::identity(n, n) * beta;
    let shrink = (1.0 - lambda) / lambda;
    for r in 0..n {
        for c in 0..r {
            f2[(r, c)] = -shrink * f1[(r, c)];
        }
    }
    let mut tri = DMatrix::identity(n, n) * (lambda * beta);
    for r in 0..n {
        for c in r..n {
            tri[(r, c)] += (1.0 - lambda) * f1[(r, c)];
        }
    }
    let det_t = tri.determinant();
    let minor = tri.clone().remove_row(row).remove_column(col);
    let sign = if (row + col) % 2 == 0 { 1.0 } else { -1.0 };
    let cofactor = sign * minor.determinant();
    if cofactor.abs() < 1e-300 || !cofactor.is_finite() {
        return Err(Error::NotApplicable("singleton cofactor vanishes".into()));
    }
    let target = 2f64.powi(n as i32) * if det_t < 0.0 { -1.0 } else { 1.0 };
    let s = (target - det_t) / (lambda * cofactor);
    f2[(row, col)] += s;
    Ok((f2, (row, col)))
}

/// Diagonal `F₁`: on the coordinates of its largest and smallest entries
/// `a > b`, place `4/(λ(1−λ)(a−b))·[[1,1],[−1,−1]]`, after a sign flip when
/// `a ≤ 0`.
fn diagonal_construction(f1: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let n = f1.nrows();
    let d: Vec<f64> = (0..n).map(|i| f1[(i, i)]).collect();
    let (mut hi, mut lo) = (0, 0);
    for i in 1..n {
        if d[i] > d[hi] {
            hi = i;
        }
        if d[i] < d[lo] {
            lo = i;
        }
    }
    if d[hi] == d[lo] {
        return Err(Error::NotApplicable("A - B K1 is a multiple of the identity".into()));
    }
    let flip = d[hi] <= 0.0;
    let (pa, pb, sgn) = if flip { (lo, hi, -1.0) } else { (hi, lo, 1.0) };
    let gap = d[hi] - d[lo];
    let c = sgn * 4.0 / (lambda * (1.0 - lambda) * gap);
    let mut f2 = DMatrix::zeros(n, n);
    f2[(pa, pa)] = c;
    f2[(pa, pb)] = c;
    f2[(pb, pa)] = -c;
    f2[(pb, pb)] = -c;
    Ok(f2)
}

/// Runs the combined gain and `K₂` alone on the linear plant.
pub fn demonstrate_instability(cert: &AdversarialCertificate, x0: &DVector<f64>, horizon: usize) -> (Trajectory, Trajectory) {
    let n = cert.model.state_dim();
    let zero = ZeroResidual { n };
    let mut combined = naive_convex_policy(
        LinearFeedback::new(cert.k2.clone(), "k2"),
        LinearFeedback::new(cert.k1.clone(), "k1"),
        cert.lambda,
    );
    let mut alone = LinearFeedback::new(cert.k2.clone(), "k2");
    (
        simulate(&cert.model, &zero, &mut combined, x0, horizon),
        simulate(&cert.model, &zero, &mut alone, x0, horizon),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model(n: usize) -> LinearModel {
        LinearModel::new(DMatrix::zeros(n, n), DMatrix::identity(n, n), DMatrix::identity(n, n), DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn diagonal_two_by_two_example() {
        let model = identity_model(2);
        // A = 0, B = I, so F₁ = −K₁
        let k1 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.5]);
        let cert = construct_adversarial_k2(&model, &k1, 0.5, 0.5).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[16.0, 16.0, -16.0, -16.0]);
        assert!((&cert.f2 - expect).amax() < 1e-12);
        assert!(cert.rho_f2 < 1e-6);
        // λb + (λ(a−b) + √((λ(a−b))² + 16))/2 with a = 0.5, b = −0.5, λ = 0.5
        let hand = 0.5 * -0.5 + (0.5 + (0.25f64 + 16.0).sqrt()) / 2.0;
        assert!((cert.rho_combined - hand).abs() < 1e-9);
        assert!((cert.rho_combined - 2.0156).abs() < 1e-4);
        assert_eq!(cert.construction_case, ConstructionCase::Diagonal2x2Embedded);
    }

    #[test]
    fn negative_diagonal_uses_sign_flip() {
        let model = identity_model(3);
        let k1 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.7, 0.4]));
        let cert = construct_adversarial_k2(&model, &k1, 0.3, 0.5).unwrap();
        assert!(cert.is_valid());
    }

    #[test]
    fn off_diagonal_reaches_two() {
        let model = identity_model(3);
        let f1 = DMatrix::from_row_slice(3, 3, &[0.1, 0.0, 0.05, 0.0, -0.2, 0.3, 0.0, 0.0, 0.4]);
        let cert = construct_adversarial_k2(&model, &(-&f1), 0.3, 0.5).unwrap();
        assert_eq!(cert.construction_case, ConstructionCase::OffDiagonal);
        // first superdiagonal is searched before the second: (1, 2) wins over (0, 2)
        assert_eq!(cert.singleton, Some((2, 1)));
        assert!(cert.rho_combined >= 2.0 - 1e-6);
        assert!((cert.rho_f2 - 0.5).abs() < 1e-3);
    }

    #[test]
    fn lower_only_is_transposed() {
        let model = identity_model(2);
        let f1 = DMatrix::from_row_slice(2, 2, &[0.3, 0.0, 0.6, -0.1]);
        let cert = construct_adversarial_k2(&model, &(-&f1), 0.6, 0.5).unwrap();
        assert!(cert.transposed);
        assert!(cert.rho_combined >= 2.0 - 1e-6);
    }

    #[test]
    fn identity_multiple_is_not_applicable() {
        let model = identity_model(2);
        let k1 = DMatrix::identity(2, 2) * -0.3;
        assert!(matches!(construct_adversarial_k2(&model, &k1, 0.5, 0.5), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn singular_input_matrix() {
        let mut model = identity_model(2);
        model.b[(1, 1)] = 0.0;
        let k1 = DMatrix::zeros(2, 2);
        assert_eq!(construct_adversarial_k2(&model, &k1, 0.5, 0.5).unwrap_err(), Error::SingularB);
    }

    #[test]
    fn demonstration_diverges_and_converges() {
        let model = identity_model(2);
        let k1 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.5]);
        let cert = construct_adversarial_k2(&model, &k1, 0.5, 0.5).unwrap();
        let (comb, alone) = demonstrate_instability(&cert, &DVector::from_vec(vec![1.0, 0.0]), 50);
        assert!(comb.final_state().norm() > 1e6);
        assert!(alone.final_state().norm() < 1e-3);
        let (z1, z2) = demonstrate_instability(&cert, &DVector::zeros(2), 50);
        assert!(z1.states.iter().chain(&z2.states).all(|x| x.amax() == 0.0));
    }
}
