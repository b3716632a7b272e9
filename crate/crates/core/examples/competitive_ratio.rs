//! Competitive ratio of the adaptive policy against the exact optimum of a
//! linear plant with known disturbances, as the black box gets worse.
//!
//!     cargo run --example competitive_ratio

use confident_control::experiments::bounds::{bounds_benchmark, competitive_case, BoundsSettings};

fn main() -> confident_control::Result<()> {
    let (syn, _, _) = bounds_benchmark(&BoundsSettings::default())?;
    println!("{:>6} {:>12} {:>10}", "ε", "mean ratio", "mean λ_T");
    for eps in [0.0, 0.02, 0.05, 0.1, 0.3] {
        let runs: Vec<_> = (0..10).map(|seed| competitive_case(&syn, eps, 0.2, 0.002, seed, 200)).collect::<Result<_, _>>()?;
        let ratio = runs.iter().map(|r| r.report.ratio).sum::<f64>() / runs.len() as f64;
        let lambda = runs.iter().map(|r| r.lambda_limit).sum::<f64>() / runs.len() as f64;
        println!("{eps:>6} {ratio:>12.6} {lambda:>10.3}");
    }
    Ok(())
}
