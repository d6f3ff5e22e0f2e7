//! Shifted expected set-difference (SESD) regression.
//!
//! `log(3 + E Z)` is roughly piecewise linear in `log(l1 / l2)`; a two-segment
//! least-squares fit gives the factors used to read ZDTS coefficients on the
//! set-difference scale.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distributions::{zdts_mean_direct, SkellamParams};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Params};
use crate::sampler::ChainSet;
use crate::zdts_model::zdts_log_rates;

/// Posterior draws used for the point cloud.
pub const MAX_ITERATIONS: usize = 200;

/// Candidate cut-offs `0.00, 0.05, ..., 2.00`.
pub fn default_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SesdPoint {
    pub x: f64,
    pub y: f64,
}

/// `(log(l1/l2), log(3 + E Z))` for one pair of rates.
pub fn sesd_point(params: SkellamParams) -> Result<SesdPoint> {
    Ok(SesdPoint {
        x: (params.lambda1() / params.lambda2()).ln(),
        y: (3.0 + zdts_mean_direct(params)?).ln(),
    })
}

/// One point per match for up to `max_iterations` evenly strided draws.
pub fn sesd_points(
    chains: &ChainSet,
    spec: &ModelSpec,
    dataset: &Dataset,
    max_iterations: usize,
) -> Result<Vec<SesdPoint>> {
    if !matches!(spec, ModelSpec::Zdts { .. }) {
        return Err(Error::InvalidArgument("SESD points need a ZDTS model".into()));
    }
    if chains.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: chains.dim(),
        });
    }
    let total = chains.total_draws();
    let stride = total.div_ceil(max_iterations.max(1)).max(1);
    let picks: Vec<usize> = (0..total).step_by(stride).collect();
    let per_draw = picks
        .par_iter()
        .map(|&t| {
            let Params::Zdts(p) = spec.decode(chains.flat_draw(t))? else {
                unreachable!("ZDTS spec decodes to ZDTS parameters")
            };
            dataset
                .matches
                .iter()
                .map(|m| {
                    let (e1, e2) = zdts_log_rates(m.home, m.away, &p)?;
                    sesd_point(SkellamParams::from_log(e1, e2)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_draw.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub alpha: f64,
    pub beta: f64,
    pub sse: f64,
    pub r2: f64,
    pub n: usize,
}

/// Ordinary least squares of `y` on `x`.
pub fn ols(points: &[SesdPoint]) -> Result<LineFit> {
    let n = points.len();
    if n < 2 {
        return Err(Error::SegmentFit(format!("segment has {n} points, need 2")));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.y).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.x - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.x - mx) * (p.y - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::SegmentFit("all x equal in segment".into()));
    }
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let sse: f64 = points.iter().map(|p| (p.y - alpha - beta * p.x).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LineFit { alpha, beta, sse, r2, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SesdFit {
    pub cutoff: f64,
    pub alpha_low: f64,
    pub beta_low: f64,
    pub alpha_high: f64,
    pub beta_high: f64,
    pub r2_low: f64,
    pub r2_high: f64,
    pub r2_combined: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Low,
    High,
}

impl SesdFit {
    pub fn beta(&self, regime: Regime) -> f64 {
        match regime {
            Regime::Low => self.beta_low,
            Regime::High => self.beta_high,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Combined R-squared of a split at `cutoff`, or why it cannot be fitted.
pub fn split_fit(points: &[SesdPoint], cutoff: f64) -> Result<SesdFit> {
    let (low, high): (Vec<SesdPoint>, Vec<SesdPoint>) = points.iter().partition(|p| p.x <= cutoff);
    let lo = ols(&low)?;
    let hi = ols(&high)?;
    let n = points.len() as f64;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let sst: f64 = points.iter().map(|p| (p.y - my).powi(2)).sum();
    let r2_combined = if sst > 0.0 {
        (1.0 - (lo.sse + hi.sse) / sst).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(SesdFit {
        cutoff,
        alpha_low: lo.alpha,
        beta_low: lo.beta,
        alpha_high: hi.alpha,
        beta_high: hi.beta,
        r2_low: lo.r2,
        r2_high: hi.r2,
        r2_combined,
    })
}

/// Grid search for the cut-off maximising the combined R-squared. Cut-offs
/// leaving a segment unfittable are skipped; ties go to the smaller cut-off.
pub fn fit_sesd(points: &[SesdPoint], grid: &[f64]) -> Result<SesdFit> {
    let fits: Vec<SesdFit> = grid
        .par_iter()
        .filter_map(|&c| split_fit(points, c).ok())
        .collect();
    let mut best: Option<SesdFit> = None;
    for f in fits {
        let better = match best {
            None => true,
            Some(b) => f.r2_combined > b.r2_combined || (f.r2_combined == b.r2_combined && f.cutoff < b.cutoff),
        };
        if better {
            best = Some(f);
        }
    }
    best.ok_or_else(|| Error::SegmentFit("no cut-off leaves two fittable segments".into()))
}

/// `exp(beta (b1 - b2)) - 1`: relative change in SESD between two
/// linear-predictor contributions.
pub fn proportional_sesd_change(fit: &SesdFit, b1: f64, b2: f64, regime: Regime) -> f64 {
    (fit.beta(regime) * (b1 - b2)).exp_m1()
}

/// CSV `x,y,segment,fitted` for plotting.
pub fn write_points_csv<W: Write>(points: &[SesdPoint], fit: &SesdFit, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["x", "y", "segment", "fitted"])?;
    for p in points {
        let (seg, fitted) = if p.x <= fit.cutoff {
            ("low", fit.alpha_low + fit.beta_low * p.x)
        } else {
            ("high", fit.alpha_high + fit.beta_high * p.x)
        };
        wtr.write_record([p.x.to_string(), p.y.to_string(), seg.to_string(), fitted.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
