//! Result rows shared by the sweep and comparison experiments, their CSV form
//! and per-(point, policy) summaries.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::plant::csv_err;

pub const RESULT_HEADER: [&str; 9] =
    ["point", "policy", "seed", "metric", "value", "diverged", "lambda_final", "lambda_mean", "ratio"];

/// One simulation: a grid point, a policy and a Monte Carlo seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub point: String,
    pub policy: String,
    pub seed: u64,
    /// `cost` or `reward`.
    pub metric: String,
    pub value: f64,
    pub diverged: bool,
    pub lambda_final: Option<f64>,
    pub lambda_mean: Option<f64>,
    /// Cost over the optimal cost, when an optimum is known.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_f64(cell: &str, line: usize, name: &str) -> Result<f64> {
    cell.parse().map_err(|_| Error::Parse { line, message: format!("{name}: `{cell}` is not a number") })
}

fn parse_opt(cell: &str, line: usize, name: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_f64(cell, line, name).map(Some)
    }
}

impl ResultTable {
    /// Rows ordered by point, policy and seed, independent of completion order.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| (&a.point, &a.policy, a.seed).cmp(&(&b.point, &b.policy, b.seed)));
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RESULT_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.point.clone(),
                r.policy.clone(),
                r.seed.to_string(),
                r.metric.clone(),
                r.value.to_string(),
                u8::from(r.diverged).to_string(),
                opt_cell(r.lambda_final),
                opt_cell(r.lambda_mean),
                opt_cell(r.ratio),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header = reader.headers().map_err(csv_err)?.clone();
        if header.iter().collect::<Vec<_>>() != RESULT_HEADER {
            return Err(Error::Parse { line: 1, message: format!("unexpected header {:?}", header) });
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(csv_err)?;
            let seed = rec[2].parse().map_err(|_| Error::Parse { line, message: format!("seed: `{}`", &rec[2]) })?;
            let diverged = match &rec[5] {
                "0" => false,
                "1" => true,
                other => return Err(Error::Parse { line, message: format!("diverged: `{other}`") }),
            };
            rows.push(ResultRow {
                point: rec[0].to_string(),
                policy: rec[1].to_string(),
                seed,
                metric: rec[3].to_string(),
                value: parse_f64(&rec[4], line, "value")?,
                diverged,
                lambda_final: parse_opt(&rec[6], line, "lambda_final")?,
                lambda_mean: parse_opt(&rec[7], line, "lambda_mean")?,
                ratio: parse_opt(&rec[8], line, "ratio")?,
            });
        }
        Ok(Self { rows })
    }

    /// Mean, spread and divergence count per (point, policy, metric), in row order.
    pub fn summarize(&self) -> Vec<SummaryRow> {
        let mut sorted = self.clone();
        sorted.sort();
        let mut out: Vec<SummaryRow> = Vec::new();
        let mut group: Vec<&ResultRow> = Vec::new();
        for row in &sorted.rows {
            if let Some(first) = group.first() {
                if (&first.point, &first.policy, &first.metric) != (&row.point, &row.policy, &row.metric) {
                    out.push(SummaryRow::from_group(&group));
                    group.clear();
                }
            }
            group.push(row);
        }
        if !group.is_empty() {
            out.push(SummaryRow::from_group(&group));
        }
        out
    }

    /// The summary row of one (point, policy) pair.
    pub fn summary_of(&self, point: &str, policy: &str) -> Option<SummaryRow> {
        self.summarize().into_iter().find(|s| s.point == point && s.policy == policy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: String,
    pub policy: String,
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub diverged: usize,
    pub lambda_final_mean: Option<f64>,
    pub ratio_mean: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

impl SummaryRow {
    fn from_group(rows: &[&ResultRow]) -> Self {
        let n = rows.len();
        let mean = rows.iter().map(|r| r.value).sum::<f64>() / n as f64;
        let var = if n > 1 {
            rows.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            point: rows[0].point.clone(),
            policy: rows[0].policy.clone(),
            metric: rows[0].metric.clone(),
            runs: n,
            mean,
            std: var.sqrt(),
            min: rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min),
            max: rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max),
            diverged: rows.iter().filter(|r| r.diverged).count(),
            lambda_final_mean: mean_of(rows.iter().map(|r| r.lambda_final)),
            ratio_mean: mean_of(rows.iter().map(|r| r.ratio)),
        }
    }
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["point", "policy", "metric", "runs", "mean", "std", "min", "max", "diverged", "lambda_final_mean", "ratio_mean"])
        .map_err(csv_err)?;
    for s in summary {
        w.write_record([
            s.point.clone(),
            s.policy.clone(),
            s.metric.clone(),
            s.runs.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.min.to_string(),
            s.max.to_string(),
            s.diverged.to_string(),
            opt_cell(s.lambda_final_mean),
            opt_cell(s.ratio_mean),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
