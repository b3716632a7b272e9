//! Adaptive EV charging: `n` chargers behind one feeder with line limit `γ`.
//!
//! State `x_t` is the remaining demand (kWh) per charger and the action is a
//! pilot allocation (kW). The crude model is `x_{t+1} = x_t − τ u_t`; the
//! residual carries arrivals, departures, full batteries and the line limit.
//! The line limit acts on the pilot signals, so capacity sent to an idle or
//! nearly full charger is lost for that step.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::linalg::LinearModel;
use crate::plant::{csv_err, Residual, ResidualKind, Trajectory};
use crate::{Error, Result};

/// One plug-in: arrives at step `arrival`, leaves at step `departure`,
/// asks for `energy` kWh on charger `station` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingSession {
    pub arrival: usize,
    pub departure: usize,
    pub energy: f64,
    pub station: usize,
}

impl ChargingSession {
    pub fn new(arrival: usize, departure: usize, energy: f64, station: usize) -> Result<Self> {
        if arrival >= departure {
            return Err(Error::Validation(format!("arrival {arrival} is not before departure {departure}")));
        }
        if !(energy.is_finite() && energy > 0.0) {
            return Err(Error::Validation(format!("energy {energy} must be positive")));
        }
        if station == 0 {
            return Err(Error::Validation("stations are numbered from 1".into()));
        }
        Ok(Self { arrival, departure, energy, station })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargingConfig {
    pub n_chargers: usize,
    /// Line limit, kW.
    pub line_limit: f64,
    /// Hours per step.
    pub tau: f64,
    /// Price per step, repeated cyclically; empty means free energy.
    pub prices: Vec<f64>,
    /// Charging reward, demand penalty, price weight, unmet-demand penalty.
    pub phi: [f64; 4],
    pub q_weight: f64,
    pub r_weight: f64,
}

impl Default for ChargingConfig {
    fn default() -> Self {
        Self {
            n_chargers: 5,
            line_limit: 6.6,
            tau: 5.0 / 60.0,
            prices: time_of_use_prices(288),
            phi: [50.0, 0.01, 10.0, 10.0],
            q_weight: 1.0,
            r_weight: 1.0,
        }
    }
}

impl ChargingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chargers == 0 {
            return Err(Error::Config("n_chargers must be at least 1".into()));
        }
        if !(self.line_limit > 0.0 && self.line_limit.is_finite()) {
            return Err(Error::Config(format!("line_limit {} must be positive", self.line_limit)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau {} must be positive", self.tau)));
        }
        if let Some(p) = self.prices.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::Config(format!("price {p} must be non-negative")));
        }
        if self.phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reward coefficients must be finite".into()));
        }
        if !(self.q_weight > 0.0 && self.r_weight > 0.0) {
            return Err(Error::Config("q_weight and r_weight must be positive".into()));
        }
        Ok(())
    }

    pub fn steps_per_day(&self) -> usize {
        (24.0 / self.tau).round() as usize
    }

    pub fn price(&self, t: usize) -> f64 {
        if self.prices.is_empty() {
            0.0
        } else {
            self.prices[t % self.prices.len()]
        }
    }

    /// `A = I`, `B = −τI`, `Q = qI`, `R = rI`.
    pub fn model(&self) -> LinearModel {
        let n = self.n_chargers;
        LinearModel::new(
            DMatrix::identity(n, n),
            DMatrix::identity(n, n) * -self.tau,
            DMatrix::identity(n, n) * self.q_weight,
            DMatrix::identity(n, n) * self.r_weight,
        )
        .expect("validated config gives a valid model")
    }
}

/// Off-peak 0.10 $/kWh, 0.20 in the morning shoulder and 0.30 from noon to 18:00.
pub fn time_of_use_prices(steps_per_day: usize) -> Vec<f64> {
    (0..steps_per_day)
        .map(|k| {
            let hour = 24.0 * k as f64 / steps_per_day as f64;
            if (12.0..18.0).contains(&hour) {
                0.30
            } else if (8.0..12.0).contains(&hour) {
                0.20
            } else {
                0.10
            }
        })
        .collect()
}

/// Arrival-time pattern of the generated sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayProfile {
    /// Commuters: arrivals bunched around 8:00, long stays.
    PreCovid,
    /// Arrivals spread over the day, shorter stays.
    PostCovid,
}

impl FromStr for DayProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "pre_covid" | "pre" => Ok(Self::PreCovid),
            "post_covid" | "post" => Ok(Self::PostCovid),
            other => Err(Error::Config(format!("unknown day profile '{other}'"))),
        }
    }
}

impl DayProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::PreCovid => "pre_covid",
            Self::PostCovid => "post_covid",
        }
    }
}

/// Draws `days` days of sessions. Each candidate session goes to a free
/// charger chosen at random and is dropped when every charger is busy.
pub fn generate_sessions(
    seed: u64,
    profile: DayProfile,
    n_chargers: usize,
    steps_per_day: usize,
    days: usize,
) -> Vec<ChargingSession> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps_per_hour = steps_per_day as f64 / 24.0;
    let count = Poisson::new(9.0).unwrap();
    let mut out = Vec::new();
    for day in 0..days {
        let offset = day * steps_per_day;
        let k = count.sample(&mut rng) as usize;
        let mut drafts: Vec<(f64, f64, f64)> = (0..k)
            .map(|_| {
                let (arrive, stay): (f64, f64) = match profile {
                    DayProfile::PreCovid => {
                        let arrive = if rng.gen_bool(0.85) {
                            Normal::new(8.0, 0.75).unwrap().sample(&mut rng)
                        } else {
                            rng.gen_range(9.0..19.0)
                        };
                        (arrive, Normal::new(8.5, 1.5).unwrap().sample(&mut rng))
                    }
                    DayProfile::PostCovid => {
                        (rng.gen_range(6.0..20.0), Normal::new(3.5, 1.5).unwrap().sample(&mut rng))
                    }
                };
                let energy = rng.gen_range(4.0..24.0);
                (arrive.clamp(0.0, 22.0), stay.clamp(0.75, 14.0), energy)
            })
            .collect();
        drafts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut free_at = vec![0usize; n_chargers];
        for (arrive, stay, energy) in drafts {
            let a = (arrive * steps_per_hour).round() as usize;
            let d = (((arrive + stay) * steps_per_hour).round() as usize).clamp(a + 1, steps_per_day);
            if a >= d {
                continue;
            }
            let free: Vec<usize> = (0..n_chargers).filter(|&i| free_at[i] <= a).collect();
            if free.is_empty() {
                continue;
            }
            let i = free[rng.gen_range(0..free.len())];
            free_at[i] = d;
            out.push(ChargingSession { arrival: offset + a, departure: offset + d, energy, station: i + 1 });
        }
    }
    out.sort_by_key(|s| (s.arrival, s.station));
    out
}

/// Parses `arrival,departure,energy_kwh,station` rows (header required).
pub fn parse_sessions<R: Read>(input: R) -> Result<Vec<ChargingSession>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column '{name}'") })
    };
    let (ca, cd, ce, cs) = (col("arrival")?, col("departure")?, col("energy_kwh")?, col("station")?);
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let field = |c: usize| rec.get(c).unwrap_or("");
        let parse_err = |what: &str, v: &str| Error::Parse { line, message: format!("{what} '{v}' is not a number") };
        let a: usize = field(ca).parse().map_err(|_| parse_err("arrival", field(ca)))?;
        let d: usize = field(cd).parse().map_err(|_| parse_err("departure", field(cd)))?;
        let e: f64 = field(ce).parse().map_err(|_| parse_err("energy_kwh", field(ce)))?;
        let s: usize = field(cs).parse().map_err(|_| parse_err("station", field(cs)))?;
        let session = ChargingSession::new(a, d, e, s).map_err(|err| match err {
            Error::Validation(m) => Error::Validation(format!("line {line}: {m}")),
            other => other,
        })?;
        out.push(session);
    }
    Ok(out)
}

pub fn load_sessions_csv(path: impl AsRef<Path>) -> Result<Vec<ChargingSession>> {
    parse_sessions(File::open(path)?)
}

pub fn write_sessions_csv<W: std::io::Write>(sessions: &[ChargingSession], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["arrival", "departure", "energy_kwh", "station"]).map_err(csv_err)?;
    for s in sessions {
        w.write_record([s.arrival.to_string(), s.departure.to_string(), s.energy.to_string(), s.station.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a one-column `price` CSV.
pub fn parse_prices<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let c = headers
        .iter()
        .position(|h| h.eq_ignore_ascii_case("price"))
        .ok_or_else(|| Error::Parse { line: 1, message: "missing column 'price'".into() })?;
    let mut out = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
        let v = rec.get(c).unwrap_or("");
        let p: f64 = v.parse().map_err(|_| Error::Parse { line, message: format!("price '{v}' is not a number") })?;
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::Validation(format!("line {line}: price {p} must be non-negative")));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_prices_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_prices(File::open(path)?)
}

/// Sessions indexed by step for fast lookup during a run.
#[derive(Debug, Clone)]
pub struct EvEnvironment {
    pub config: ChargingConfig,
    pub sessions: Vec<ChargingSession>,
    /// `(charger, energy)` plugging in at each step.
    arrivals: Vec<Vec<(usize, f64)>>,
    /// `(charger, requested energy)` leaving at each step.
    departures: Vec<Vec<(usize, f64)>>,
    /// `[t][i]`: charger `i` holds a car that can draw power during step `t`.
    active: Vec<Vec<bool>>,
}

/// Builds the environment over `horizon` steps.
pub fn ev_environment(config: &ChargingConfig, sessions: &[ChargingSession], horizon: usize) -> Result<EvEnvironment> {
    config.validate()?;
    let n = config.n_chargers;
    if sessions.windows(2).any(|w| w[1].arrival < w[0].arrival) {
        return Err(Error::Validation("sessions must be sorted by arrival".into()));
    }
    let mut last: Vec<Option<usize>> = vec![None; n];
    for (j, s) in sessions.iter().enumerate() {
        ChargingSession::new(s.arrival, s.departure, s.energy, s.station)?;
        if s.station > n {
            return Err(Error::Validation(format!("session {j} uses charger {} of {n}", s.station)));
        }
        let i = s.station - 1;
        if let Some(prev) = last[i] {
            if s.arrival < sessions[prev].departure {
                return Err(Error::SessionConflict { station: s.station, first: prev, second: j });
            }
        }
        last[i] = Some(j);
    }
    let mut arrivals = vec![Vec::new(); horizon];
    let mut departures = vec![Vec::new(); horizon];
    let mut active = vec![vec![false; n]; horizon];
    for s in sessions {
        let i = s.station - 1;
        if s.arrival < horizon {
            arrivals[s.arrival].push((i, s.energy));
        }
        if s.departure < horizon {
            departures[s.departure].push((i, s.energy));
        }
        for row in active.iter_mut().take(s.departure.min(horizon)).skip(s.arrival + 1) {
            row[i] = true;
        }
    }
    Ok(EvEnvironment { config: config.clone(), sessions: sessions.to_vec(), arrivals, departures, active })
}

impl EvEnvironment {
    pub fn horizon(&self) -> usize {
        self.active.len()
    }

    pub fn model(&self) -> LinearModel {
        self.config.model()
    }

    /// Negative pilots become zero; the rest are scaled down to the line limit.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut p = u.map(|v| v.max(0.0));
        let total = p.sum();
        if total > self.config.line_limit {
            p *= self.config.line_limit / total;
        }
        p
    }

    /// Power each charger actually draws during step `t`.
    pub fn delivered(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let pilots = self.project(u);
        let tau = self.config.tau;
        DVector::from_fn(x.len(), |i, _| {
            if self.active.get(t).is_some_and(|row| row[i]) {
                pilots[i].min(x[i].max(0.0) / tau)
            } else {
                0.0
            }
        })
    }

    /// The true next demand vector.
    pub fn next_state(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut next = x - self.delivered(t, x, u) * self.config.tau;
        if let Some(deps) = self.departures.get(t) {
            for &(i, _) in deps {
                next[i] = 0.0;
            }
        }
        if let Some(arr) = self.arrivals.get(t) {
            for &(i, e) in arr {
                next[i] += e;
            }
        }
        next.map(|v| v.max(0.0))
    }

    /// `φ₁τ‖δ‖₂ − φ₂‖x‖₂ − φ₃p_t‖δ‖₁ − φ₄ Σ_departing x⁽ⁱ⁾/e_j` with `δ` the delivered power.
    pub fn reward(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let d = self.delivered(t, x, u);
        let [p1, p2, p3, p4] = self.config.phi;
        let unmet: f64 = self.departures.get(t).map_or(0.0, |deps| deps.iter().map(|&(i, e)| x[i] / e).sum());
        p1 * self.config.tau * d.norm() - p2 * x.norm() - p3 * self.config.price(t) * d.lp_norm(1) - p4 * unmet
    }

    /// Per-step rewards recomputed from a recorded run.
    pub fn rewards(&self, traj: &Trajectory) -> Vec<f64> {
        traj.actions.iter().enumerate().map(|(t, u)| self.reward(t, &traj.states[t], u)).collect()
    }

    pub fn total_reward(&self, traj: &Trajectory) -> f64 {
        self.rewards(traj).iter().sum()
    }

    /// Energy still owed when each car left, summed over the run.
    pub fn unmet_energy(&self, traj: &Trajectory) -> f64 {
        (0..traj.horizon())
            .map(|t| self.departures[t].iter().map(|&(i, _)| traj.states[t][i]).sum::<f64>())
            .sum()
    }

    pub fn residual(self: &Arc<Self>) -> EvResidual {
        EvResidual { env: Arc::clone(self) }
    }
}

/// `f(t, x, u) = x_{t+1} − (x − τu)`.
#[derive(Debug, Clone)]
pub struct EvResidual {
    pub env: Arc<EvEnvironment>,
}

impl Residual for EvResidual {
    fn eval(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.env.next_state(t, x, u) - x + u * self.env.config.tau
    }

    /// Bound on the state-action part (arrivals are a time-only offset):
    /// departure zeroing is 1-Lipschitz in `x` and the pilot projection has
    /// Jacobian norm at most `1 + √n`.
    fn lipschitz(&self) -> f64 {
        let n = self.env.config.n_chargers as f64;
        std::f64::consts::SQRT_2 * (1.0f64).max(self.env.config.tau * (2.0 + n.sqrt()))
    }

    fn kind(&self) -> ResidualKind {
        ResidualKind::StateAction
    }
}
