//! Biased black box versus the adaptive policy on generated charging days.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use super::results::{write_summary_csv, ResultRow, ResultTable};
use super::{create, read_adaptive, read_seed, require, sign_test_p};
use crate::adaptive::{adaptive_policy, AdaptiveConfig, LambdaSource, NumeratorStart};
use crate::config::RunConfig;
use crate::envs::ev::{
    ev_environment, generate_sessions, load_prices_csv, load_sessions_csv, ChargingConfig, ChargingSession, DayProfile,
};
use crate::error::{Error, Result};
use crate::linalg::{synthesize, Synthesis};
use crate::plant::simulate;
use crate::policy::{lqr_policy, parameterized_blackbox};

pub const POLICIES: [&str; 3] = ["adaptive", "blackbox", "lqr"];

#[derive(Debug, Clone, PartialEq)]
pub struct EvCompareSettings {
    pub charging: ChargingConfig,
    pub adaptive: AdaptiveConfig,
    /// Test days per period.
    pub seeds: usize,
    /// Days used to fit the black box's residual estimates.
    pub training_days: usize,
    /// First seed of the training days; test days use `seed..seed + seeds`.
    pub training_seed: u64,
    pub seed: u64,
    /// The profile the black box was fit on.
    pub training_profile: DayProfile,
    pub unshifted: DayProfile,
    pub shifted: DayProfile,
    /// A fixed session list evaluated as one extra period.
    pub sessions: Option<Vec<ChargingSession>>,
}

impl Default for EvCompareSettings {
    fn default() -> Self {
        Self {
            charging: ChargingConfig { r_weight: 0.1, ..ChargingConfig::default() },
            adaptive: AdaptiveConfig {
                alpha: 0.001,
                source: LambdaSource::Learned(NumeratorStart::Zero),
                ..AdaptiveConfig::default()
            },
            seeds: 20,
            training_days: 60,
            training_seed: 10_000,
            seed: 0,
            training_profile: DayProfile::PreCovid,
            unshifted: DayProfile::PreCovid,
            shifted: DayProfile::PostCovid,
            sessions: None,
        }
    }
}

fn read_profile(cfg: &RunConfig, key: &str, default: DayProfile) -> Result<DayProfile> {
    let text: String = cfg.get("ev", key, default.as_str().to_string())?;
    text.parse()
}

impl EvCompareSettings {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let d = Self::default();
        let dc = &d.charging;
        let e = "ev";
        let minutes: f64 = cfg.get(e, "step_minutes", dc.tau * 60.0)?;
        let mut charging = ChargingConfig {
            n_chargers: cfg.get(e, "n_chargers", dc.n_chargers)?,
            line_limit: cfg.get(e, "line_limit", dc.line_limit)?,
            tau: minutes / 60.0,
            prices: dc.prices.clone(),
            phi: [
                cfg.get(e, "phi1", dc.phi[0])?,
                cfg.get(e, "phi2", dc.phi[1])?,
                cfg.get(e, "phi3", dc.phi[2])?,
                cfg.get(e, "phi4", dc.phi[3])?,
            ],
            q_weight: cfg.get(e, "q_weight", dc.q_weight)?,
            r_weight: cfg.get(e, "r_weight", dc.r_weight)?,
        };
        if let Some(path) = cfg.get_opt(e, "prices") {
            charging.prices = load_prices_csv(PathBuf::from(path))?;
        } else if charging.steps_per_day() != dc.steps_per_day() {
            charging.prices = crate::envs::ev::time_of_use_prices(charging.steps_per_day());
        }
        charging.validate()?;
        let sessions = cfg.get_opt(e, "sessions").map(|p| load_sessions_csv(PathBuf::from(p))).transpose()?;
        let out = Self {
            charging,
            adaptive: read_adaptive(cfg, d.adaptive.alpha, NumeratorStart::Zero)?,
            seeds: cfg.get(e, "seeds", d.seeds)?,
            training_days: cfg.get(e, "training_days", d.training_days)?,
            training_seed: cfg.get(e, "training_seed", d.training_seed)?,
            seed: read_seed(cfg)?,
            training_profile: read_profile(cfg, "training_profile", d.training_profile)?,
            unshifted: read_profile(cfg, "unshifted", d.unshifted)?,
            shifted: read_profile(cfg, "shifted", d.shifted)?,
            sessions,
        };
        require(out.seeds >= 1 && out.training_days >= 1, || "[ev] seeds and training_days must be at least 1".into())?;
        Ok(out)
    }
}

/// Mean realized residual per time-of-day step over LQR-controlled training days.
pub fn fit_residual_estimates(
    charging: &ChargingConfig,
    syn: &Synthesis,
    profile: DayProfile,
    first_seed: u64,
    days: usize,
) -> Result<Vec<DVector<f64>>> {
    let t = charging.steps_per_day();
    let n = charging.n_chargers;
    let per_day: Vec<Vec<DVector<f64>>> = (0..days as u64)
        .into_par_iter()
        .map(|d| {
            let sessions = generate_sessions(first_seed + d, profile, n, t, 1);
            let env = Arc::new(ev_environment(charging, &sessions, t)?);
            let traj = simulate(&env.model(), &env.residual(), &mut lqr_policy(syn), &DVector::zeros(n), t);
            Ok(traj.residuals)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![DVector::zeros(n); t];
    for day in &per_day {
        for (m, f) in mean.iter_mut().zip(day) {
            *m += f / days as f64;
        }
    }
    Ok(mean)
}

/// Rewards of the three policies on one day.
pub fn evaluate_day(
    charging: &ChargingConfig,
    syn: &Synthesis,
    f_hat: &[DVector<f64>],
    adaptive: &AdaptiveConfig,
    sessions: &[ChargingSession],
) -> Result<[(f64, Option<(f64, f64)>); 3]> {
    let t = charging.steps_per_day();
    let env = Arc::new(ev_environment(charging, sessions, t)?);
    let (model, residual) = (env.model(), env.residual());
    let x0 = DVector::zeros(charging.n_chargers);
    let mut pol = adaptive_policy(syn, parameterized_blackbox(syn, f_hat), lqr_policy(syn), adaptive.clone());
    let ad = env.total_reward(&simulate(&model, &residual, &mut pol, &x0, t));
    let c = pol.confidence()?;
    let lam = (c.lambda_limit, c.lambdas.iter().sum::<f64>() / c.lambdas.len() as f64);
    let bb = env.total_reward(&simulate(&model, &residual, &mut parameterized_blackbox(syn, f_hat), &x0, t));
    let lqr = env.total_reward(&simulate(&model, &residual, &mut lqr_policy(syn), &x0, t));
    Ok([(ad, Some(lam)), (bb, None), (lqr, None)])
}

/// Average rewards of one period and the adaptive-versus-black-box tests.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSummary {
    pub period: String,
    pub runs: usize,
    pub adaptive_mean: f64,
    pub blackbox_mean: f64,
    pub lqr_mean: f64,
    /// Days on which adaptive earned at least the black box's reward.
    pub wins: usize,
    pub sign_test_p: f64,
    /// `(adaptive − blackbox) / |blackbox|` on the means.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvComparison {
    pub table: ResultTable,
    pub periods: Vec<PeriodSummary>,
}

/// Summarizes one period of a reward table.
pub fn period_summary(table: &ResultTable, period: &str) -> Option<PeriodSummary> {
    let rows = |policy: &str| -> Vec<&ResultRow> {
        table.rows.iter().filter(|r| r.point == period && r.policy == policy).collect()
    };
    let (ad, bb, lqr) = (rows("adaptive"), rows("blackbox"), rows("lqr"));
    if ad.is_empty() || ad.len() != bb.len() {
        return None;
    }
    let mean = |v: &[&ResultRow]| v.iter().map(|r| r.value).sum::<f64>() / v.len().max(1) as f64;
    let wins = ad.iter().zip(&bb).filter(|(a, b)| a.seed == b.seed && a.value >= b.value).count();
    let (am, bm) = (mean(&ad), mean(&bb));
    Some(PeriodSummary {
        period: period.to_string(),
        runs: ad.len(),
        adaptive_mean: am,
        blackbox_mean: bm,
        lqr_mean: mean(&lqr),
        wins,
        sign_test_p: sign_test_p(wins, ad.len()),
        relative_gap: (am - bm) / bm.abs().max(f64::MIN_POSITIVE),
    })
}

fn push_rows(rows: &mut Vec<ResultRow>, period: &str, seed: u64, result: [(f64, Option<(f64, f64)>); 3]) {
    for (policy, (value, lam)) in POLICIES.iter().zip(result) {
        rows.push(ResultRow {
            point: period.to_string(),
            policy: policy.to_string(),
            seed,
            metric: "reward".into(),
            value,
            diverged: !value.is_finite(),
            lambda_final: lam.map(|l| l.0),
            lambda_mean: lam.map(|l| l.1),
            ratio: None,
        });
    }
}

/// Runs both periods (plus a fixed session file if given).
///
/// Periods are labelled `unshifted` and `shifted`; the profile names are in
/// the effective configuration.
pub fn ev_compare(s: &EvCompareSettings) -> Result<EvComparison> {
    s.charging.validate()?;
    let syn = synthesize(&s.charging.model())?;
    let f_hat = fit_residual_estimates(&s.charging, &syn, s.training_profile, s.training_seed, s.training_days)?;
    let t = s.charging.steps_per_day();
    let n = s.charging.n_chargers;
    let jobs: Vec<(&str, DayProfile, u64)> = [("unshifted", s.unshifted), ("shifted", s.shifted)]
        .into_iter()
        .flat_map(|(label, profile)| (s.seed..s.seed + s.seeds as u64).map(move |seed| (label, profile, seed)))
        .collect();
    let results: Vec<(&str, u64, [(f64, Option<(f64, f64)>); 3])> = jobs
        .par_iter()
        .map(|&(label, profile, seed)| {
            let sessions = generate_sessions(seed, profile, n, t, 1);
            Ok((label, seed, evaluate_day(&s.charging, &syn, &f_hat, &s.adaptive, &sessions)?))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (label, seed, r) in results {
        push_rows(&mut rows, label, seed, r);
    }
    let mut labels = vec!["unshifted", "shifted"];
    if let Some(sessions) = &s.sessions {
        if sessions.iter().any(|x| x.departure > t || x.station > n) {
            return Err(Error::Validation(format!("session file must fit one day of {t} steps and {n} chargers")));
        }
        push_rows(&mut rows, "custom", 0, evaluate_day(&s.charging, &syn, &f_hat, &s.adaptive, sessions)?);
        labels.push("custom");
    }
    let mut table = ResultTable { rows };
    table.sort();
    let periods = labels.iter().filter_map(|p| period_summary(&table, p)).collect();
    Ok(EvComparison { table, periods })
}

pub fn write_periods_csv<W: std::io::Write>(periods: &[PeriodSummary], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = crate::plant::csv_err;
    w.write_record(["period", "runs", "adaptive_mean", "blackbox_mean", "lqr_mean", "wins", "sign_test_p", "relative_gap"])
        .map_err(err)?;
    for p in periods {
        w.write_record([
            p.period.clone(),
            p.runs.to_string(),
            p.adaptive_mean.to_string(),
            p.blackbox_mean.to_string(),
            p.lqr_mean.to_string(),
            p.wins.to_string(),
            p.sign_test_p.to_string(),
            p.relative_gap.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run_ev_compare(s: &EvCompareSettings, out: &Path) -> Result<String> {
    let cmp = ev_compare(s)?;
    cmp.table.write_csv(create(out, "ev.csv")?)?;
    write_summary_csv(&cmp.table.summarize(), create(out, "ev_summary.csv")?)?;
    write_periods_csv(&cmp.periods, create(out, "ev_periods.csv")?)?;
    let mut text = format!(
        "{:<10} {:>12} {:>12} {:>12} {:>7} {:>9} {:>8}\n",
        "period", "adaptive", "blackbox", "lqr", "wins", "p", "gap"
    );
    for p in &cmp.periods {
        let _ = writeln!(
            text,
            "{:<10} {:>12.3} {:>12.3} {:>12.3} {:>4}/{:<2} {:>9.2e} {:>7.2}%",
            p.period,
            p.adaptive_mean,
            p.blackbox_mean,
            p.lqr_mean,
            p.wins,
            p.runs,
            p.sign_test_p,
            100.0 * p.relative_gap
        );
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_day_rewards_are_equal_and_repeatable() {
        let s = EvCompareSettings { training_days: 3, ..EvCompareSettings::default() };
        let syn = synthesize(&s.charging.model()).unwrap();
        let f_hat = fit_residual_estimates(&s.charging, &syn, DayProfile::PreCovid, 5, 3).unwrap();
        let a = evaluate_day(&s.charging, &syn, &f_hat, &s.adaptive, &[]).unwrap();
        let b = evaluate_day(&s.charging, &syn, &f_hat, &s.adaptive, &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].0, a[1].0);
        assert_eq!(a[1].0, a[2].0);
    }

    #[test]
    fn period_summary_counts_ties_as_wins() {
        let mk = |policy: &str, seed, value| ResultRow {
            point: "p".into(),
            policy: policy.into(),
            seed,
            metric: "reward".into(),
            value,
            diverged: false,
            lambda_final: None,
            lambda_mean: None,
            ratio: None,
        };
        let table = ResultTable {
            rows: vec![mk("adaptive", 0, 2.0), mk("blackbox", 0, 2.0), mk("adaptive", 1, 1.0), mk("blackbox", 1, 3.0)],
        };
        let p = period_summary(&table, "p").unwrap();
        assert_eq!(p.wins, 1);
        assert_eq!(p.sign_test_p, 0.75);
        assert!((p.relative_gap - (1.5 - 2.5) / 2.5).abs() < 1e-15);
    }
}
