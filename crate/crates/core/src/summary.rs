//! Posterior summaries of constrained parameters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::diagnostics::quantile;
use crate::error::Result;
use crate::sampler::ChainSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

impl ParamSummary {
    pub fn from_draws(name: &str, draws: &[f64]) -> Self {
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        ParamSummary {
            name: name.to_string(),
            mean,
            median: quantile(&sorted, 0.5),
            sd: var.sqrt(),
            q025: quantile(&sorted, 0.025),
            q975: quantile(&sorted, 0.975),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

/// One row per parameter over the pooled chains.
pub fn summarize(chains: &ChainSet) -> Vec<ParamSummary> {
    chains
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| ParamSummary::from_draws(name, &chains.pooled(j)))
        .collect()
}

/// CSV `parameter,mean,median,sd,q2.5,q97.5`.
pub fn write_summary_csv<W: Write>(rows: &[ParamSummary], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["parameter", "mean", "median", "sd", "q2.5", "q97.5"])?;
    for r in rows {
        wtr.write_record([
            r.name.clone(),
            r.mean.to_string(),
            r.median.to_string(),
            r.sd.to_string(),
            r.q025.to_string(),
            r.q975.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_simple_sequence() {
        let draws: Vec<f64> = (1..=101).map(f64::from).collect();
        let s = ParamSummary::from_draws("x", &draws);
        assert_eq!(s.mean, 51.0);
        assert_eq!(s.median, 51.0);
        assert!((s.q025 - 3.5).abs() < 1e-12);
        assert!((s.q975 - 98.5).abs() < 1e-12);
        assert!((s.sd - (101.0f64 * 102.0 / 12.0).sqrt()).abs() < 1e-9);
        assert!(s.covers(50.0) && !s.covers(1.0));
    }

    #[test]
    fn summarize_pools_chains() {
        let set = ChainSet::from_scalar_chains(vec![vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let rows = summarize(&set);
        assert_eq!(rows[0].mean, 1.0);
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("parameter,mean,median,sd,q2.5,q97.5\nx,1,1,"));
    }
}
