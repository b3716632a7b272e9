//! Riccati solution, gain and decay constants of a configured system.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use super::require;
use crate::config::RunConfig;
use crate::envs::cartpole::{cartpole_linearization, CartPoleParams};
use crate::envs::ev::ChargingConfig;
use crate::error::{Error, Result};
use crate::linalg::{synthesize, LinearModel, Synthesis};

#[derive(Debug, Clone, PartialEq)]
pub struct DareSettings {
    pub model: LinearModel,
    pub system: String,
}

fn read_matrix(cfg: &RunConfig, key: &str, rows: usize, default: Option<DMatrix<f64>>) -> Result<DMatrix<f64>> {
    let fallback: Vec<f64> = default.as_ref().map(|m| m.transpose().iter().copied().collect()).unwrap_or_default();
    let values: Vec<f64> = cfg.get_list("dare", key, &fallback)?;
    require(rows > 0 && values.len() % rows == 0, || format!("[dare] {key} has {} entries, not a multiple of {rows} rows", values.len()))?;
    Ok(DMatrix::from_row_slice(rows, values.len() / rows, &values))
}

impl DareSettings {
    /// `system = cartpole | ev | matrix`; matrices are row-major lists.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let system: String = cfg.get("dare", "system", "cartpole".to_string())?;
        let model = match system.as_str() {
            "cartpole" => {
                let p = CartPoleParams::default();
                cartpole_linearization(&p.model_body(), p.q_weight, p.r_weight)
            }
            "ev" => ChargingConfig { r_weight: 0.1, ..ChargingConfig::default() }.model(),
            "matrix" => {
                let n: usize = cfg.get("dare", "n", 0)?;
                require(n >= 1, || "[dare] n must be at least 1 for system = matrix".into())?;
                if !cfg.contains("dare", "a") || !cfg.contains("dare", "b") {
                    return Err(Error::Config("[dare] system = matrix needs a and b".into()));
                }
                let a = read_matrix(cfg, "a", n, None)?;
                let b = read_matrix(cfg, "b", n, None)?;
                let m = b.ncols();
                let q = read_matrix(cfg, "q", n, Some(DMatrix::identity(n, n)))?;
                let r = read_matrix(cfg, "r", m, Some(DMatrix::identity(m, m)))?;
                LinearModel::new(a, b, q, r)?
            }
            other => return Err(Error::Config(format!("[dare] system must be cartpole, ev or matrix, got `{other}`"))),
        };
        Ok(Self { model, system })
    }
}

pub fn format_synthesis(syn: &Synthesis) -> String {
    let mut text = String::new();
    let mat = |text: &mut String, name: &str, m: &DMatrix<f64>| {
        let _ = writeln!(text, "{name} =");
        for row in m.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>14.6e}")).collect();
            let _ = writeln!(text, "  [{}]", cells.join(" "));
        }
    };
    mat(&mut text, "P", &syn.p);
    mat(&mut text, "K", &syn.k);
    mat(&mut text, "F = A - BK", &syn.f);
    let _ = writeln!(text, "spectral radius of F  {:.12}", syn.spectral_radius_f);
    let _ = writeln!(text, "rho                   {:.12}", syn.rho);
    let _ = writeln!(text, "C_F                   {:.6}", syn.c_f);
    let _ = writeln!(text, "kappa                 {:.6}", syn.kappa);
    let _ = writeln!(text, "sigma                 {:.6e}", syn.sigma);
    let _ = writeln!(text, "riccati residual      {:.3e}", syn.dare_residual());
    let _ = writeln!(text, "iterations            {}", syn.dare_iterations);
    text
}

pub fn run_dare(s: &DareSettings, out: &Path) -> Result<String> {
    let syn = synthesize(&s.model)?;
    let text = format!("system {}\n{}", s.system, format_synthesis(&syn));
    std::fs::write(out.join("synthesis.txt"), &text)?;
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_matrix_system_gives_golden_ratio() {
        let cfg = RunConfig::parse("[dare]\nsystem = matrix\nn = 1\na = 1\nb = 1\n").unwrap();
        let s = DareSettings::from_config(&cfg).unwrap();
        cfg.reject_unknown().unwrap();
        let syn = synthesize(&s.model).unwrap();
        assert!((syn.p[(0, 0)] - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-10);
        assert!(format_synthesis(&syn).contains("P ="));
    }

    #[test]
    fn ragged_matrix_is_a_config_error() {
        let cfg = RunConfig::parse("[dare]\nsystem = matrix\nn = 2\na = 1, 2, 3\nb = 1, 0\n").unwrap();
        assert!(matches!(DareSettings::from_config(&cfg), Err(Error::Config(_))));
    }
}
