//! WAIC and Pareto-smoothed importance-sampling LOO on the deviance scale.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distributions::log_sum_exp;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampler::ChainSet;

/// Share of the largest importance ratios replaced by the Pareto fit.
pub const TAIL_FRACTION: f64 = 0.2;
/// Pareto shape above which the LOO estimate is unreliable.
pub const K_WARN: f64 = 0.7;

/// Row-major `S x n` matrix of `log p(y_i | theta_s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    pub n_draws: usize,
    pub n_obs: usize,
    pub values: Vec<f64>,
}

impl PointwiseLogLik {
    pub fn new(n_draws: usize, n_obs: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_draws * n_obs {
            return Err(Error::DimensionMismatch {
                expected: n_draws * n_obs,
                got: values.len(),
            });
        }
        if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::InvalidArgument("log-likelihood must be finite or -inf".into()));
        }
        Ok(PointwiseLogLik { n_draws, n_obs, values })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("ragged log-likelihood rows".into()));
        }
        PointwiseLogLik::new(s, n, rows.concat())
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_obs..(s + 1) * self.n_obs]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.n_obs).copied().collect()
    }
}

/// Log-likelihood of every observation under every kept draw.
pub fn pointwise_loglik(chains: &ChainSet, spec: &ModelSpec, dataset: &Dataset) -> Result<PointwiseLogLik> {
    if chains.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: chains.dim(),
        });
    }
    let rows = (0..chains.total_draws())
        .into_par_iter()
        .map(|t| spec.pointwise_log_lik(dataset, chains.flat_draw(t)))
        .collect::<Result<Vec<_>>>()?;
    let n = dataset.n_matches();
    PointwiseLogLik::new(rows.len(), n, rows.concat())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub lppd: f64,
    pub p_waic: f64,
}

fn check_column(i: usize, col: &[f64]) -> Result<()> {
    if col.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::DegenerateObservation(i));
    }
    Ok(())
}

pub fn waic(pll: &PointwiseLogLik) -> Result<Waic> {
    let s = pll.n_draws;
    if s < 2 {
        return Err(Error::InvalidArgument(format!("WAIC needs at least 2 draws, got {s}")));
    }
    let terms = (0..pll.n_obs)
        .into_par_iter()
        .map(|i| {
            let col = pll.column(i);
            check_column(i, &col)?;
            let lppd = log_sum_exp(&col) - (s as f64).ln();
            let m = col.iter().sum::<f64>() / s as f64;
            let var = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (s as f64 - 1.0);
            // A -inf entry makes the variance undefined; count it as infinite.
            Ok((lppd, if var.is_nan() { f64::INFINITY } else { var }))
        })
        .collect::<Result<Vec<_>>>()?;
    let lppd: f64 = terms.iter().map(|t| t.0).sum();
    let p_waic: f64 = terms.iter().map(|t| t.1).sum();
    Ok(Waic {
        waic: -2.0 * (lppd - p_waic),
        lppd,
        p_waic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loo {
    pub looic: f64,
    pub elpd_loo: f64,
    /// `lppd - elpd_loo`.
    pub p_loo: f64,
    pub pareto_k: Vec<f64>,
}

impl Loo {
    pub fn n_high_k(&self) -> usize {
        self.pareto_k.iter().filter(|&&k| k > K_WARN).count()
    }
}

/// Generalized Pareto fit `(k, sigma)` to positive exceedances, by the
/// Zhang-Stephens empirical Bayes estimator with a weakly informative
/// shrinkage of `k` towards 0.5. `x` must be sorted ascending.
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let xmax = x[n - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / xmax + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let k = x.iter().map(|&xi| (-t * xi).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((-t / k).ln() - k - 1.0)
        })
        .collect();
    let lse = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta.iter().zip(&l_theta).map(|(t, l)| t * (l - lse).exp()).sum();
    let k = x.iter().map(|&xi| (-theta_hat * xi).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let k = (k * n as f64 + 10.0 * 0.5) / (n as f64 + 10.0);
    (k, sigma)
}

/// Method-of-moments generalized Pareto fit.
fn gpd_fit_moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let k = 0.5 * (1.0 - m * m / v);
    (k, m * (1.0 - k))
}

fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-12 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Pareto-smoothed log importance weights (unnormalised) and the shape
/// estimate for one observation's raw log ratios.
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|v| v - max).collect();
    let tail_len = ((TAIL_FRACTION * s as f64).ceil() as usize).min(s - 1);
    if tail_len < 5 {
        return (lw, f64::INFINITY);
    }
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
    let tail = &order[s - tail_len..];
    let cutoff = lw[order[s - tail_len - 1]];
    let x: Vec<f64> = tail.iter().map(|&i| lw[i].exp() - cutoff.exp()).collect();
    if x[tail_len - 1] - x[0] <= f64::EPSILON {
        // Flat tail: nothing to smooth.
        return (lw, f64::NEG_INFINITY);
    }
    let (mut k, mut sigma) = gpd_fit(&x);
    if !(k.is_finite() && sigma.is_finite() && sigma > 0.0) {
        (k, sigma) = gpd_fit_moments(&x);
    }
    if !(k.is_finite() && sigma.is_finite() && sigma > 0.0) {
        return (lw, f64::INFINITY);
    }
    for (z, &i) in tail.iter().enumerate() {
        let p = (z as f64 + 0.5) / tail_len as f64;
        lw[i] = (gpd_quantile(p, k, sigma) + cutoff.exp()).ln().min(0.0);
    }
    (lw, k)
}

pub fn looic(pll: &PointwiseLogLik) -> Result<Loo> {
    let s = pll.n_draws;
    if s < 2 {
        return Err(Error::InvalidArgument(format!("LOO needs at least 2 draws, got {s}")));
    }
    if s < 100 {
        log::warn!("only {s} draws; PSIS-LOO estimates will be noisy");
    }
    let terms = (0..pll.n_obs)
        .into_par_iter()
        .map(|i| {
            let col = pll.column(i);
            check_column(i, &col)?;
            if col.contains(&f64::NEG_INFINITY) {
                // A zero-likelihood draw makes its raw ratio infinite.
                return Err(Error::DegenerateObservation(i));
            }
            let ratios: Vec<f64> = col.iter().map(|v| -v).collect();
            let (lw, k) = psis_smooth(&ratios);
            let num: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
            let elpd = log_sum_exp(&num) - log_sum_exp(&lw);
            let lppd = log_sum_exp(&col) - (s as f64).ln();
            Ok((elpd, lppd, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let elpd_loo: f64 = terms.iter().map(|t| t.0).sum();
    let lppd: f64 = terms.iter().map(|t| t.1).sum();
    let pareto_k: Vec<f64> = terms.iter().map(|t| t.2).collect();
    let loo = Loo {
        looic: -2.0 * elpd_loo,
        elpd_loo,
        p_loo: lppd - elpd_loo,
        pareto_k,
    };
    let high = loo.n_high_k();
    if high > 0 {
        log::warn!("{high} observations have Pareto k above {K_WARN}");
    }
    Ok(loo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model: String,
    pub waic: Waic,
    pub loo: Loo,
}

pub fn compare(model: &str, pll: &PointwiseLogLik) -> Result<Comparison> {
    Ok(Comparison {
        model: model.to_string(),
        waic: waic(pll)?,
        loo: looic(pll)?,
    })
}

/// CSV `model,WAIC,LOOIC,p_waic,p_loo,max_k`.
pub fn write_comparison_csv<W: Write>(rows: &[Comparison], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["model", "WAIC", "LOOIC", "p_waic", "p_loo", "max_k"])?;
    for r in rows {
        let max_k = r.loo.pareto_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        wtr.write_record([
            r.model.clone(),
            format!("{:.2}", r.waic.waic),
            format!("{:.2}", r.loo.looic),
            format!("{:.3}", r.waic.p_waic),
            format!("{:.3}", r.loo.p_loo),
            format!("{:.3}", max_k),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MatchRecord, SetDiff};
    use crate::sampler::Chain;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn two_draw_hand_computation() {
        let pll = PointwiseLogLik::from_rows(vec![vec![0.5f64.ln()], vec![0.25f64.ln()]]).unwrap();
        let w = waic(&pll).unwrap();
        let lppd = 0.375f64.ln();
        let p = 2f64.ln().powi(2) / 2.0;
        assert!((w.lppd - lppd).abs() < 1e-15);
        assert!((w.p_waic - p).abs() < 1e-15);
        assert!((w.waic - (-2.0 * (lppd - p))).abs() < 1e-14);
    }

    #[test]
    fn constant_loglik_waic_equals_looic() {
        let ll = [-1.2, -0.7, -2.5];
        let pll = PointwiseLogLik::from_rows(vec![ll.to_vec(); 400]).unwrap();
        let w = waic(&pll).unwrap();
        let l = looic(&pll).unwrap();
        assert!(w.p_waic.abs() < 1e-20);
        let total: f64 = ll.iter().sum();
        assert!((w.waic + 2.0 * total).abs() < 1e-12);
        assert!((l.looic - w.waic).abs() < 1e-12);
    }

    #[test]
    fn all_neg_inf_observation_errors() {
        let pll = PointwiseLogLik::from_rows(vec![vec![-1.0, f64::NEG_INFINITY]; 3]).unwrap();
        assert!(matches!(waic(&pll), Err(Error::DegenerateObservation(1))));
        assert!(looic(&pll).is_err());
        assert!(PointwiseLogLik::from_rows(vec![vec![f64::NAN]]).is_err());
        assert!(waic(&PointwiseLogLik::from_rows(vec![vec![-1.0]]).unwrap()).is_err());
    }

    /// `y_i ~ N(theta, 1)`, `theta ~ N(0, tau^2)`: posterior draws and the
    /// exact leave-one-out predictive densities.
    #[test]
    fn exact_loo_conjugate_oracle() {
        for seed in 0..10 {
            exact_loo_case(seed);
        }
    }

    fn exact_loo_case(seed: u64) {
        let y = [0.3, -1.1, 0.8, 1.9, 0.1, -0.4];
        let tau2 = 100.0;
        let post = |obs: &[f64]| {
            let prec = 1.0 / tau2 + obs.len() as f64;
            (obs.iter().sum::<f64>() / prec, 1.0 / prec)
        };
        let log_norm = |x: f64, m: f64, v: f64| -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m).powi(2) / v);
        let exact: f64 = (0..y.len())
            .map(|i| {
                let rest: Vec<f64> = y.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, v)| *v).collect();
                let (m, v) = post(&rest);
                log_norm(y[i], m, 1.0 + v)
            })
            .sum();
        let (m, v) = post(&y);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(m, v.sqrt()).unwrap();
        let rows: Vec<Vec<f64>> = (0..8000)
            .map(|_| {
                let th = normal.sample(&mut rng);
                y.iter().map(|&yi| log_norm(yi, th, 1.0)).collect()
            })
            .collect();
        let l = looic(&PointwiseLogLik::from_rows(rows).unwrap()).unwrap();
        assert!((l.looic - (-2.0 * exact)).abs() < 0.1, "{} vs {}", l.looic, -2.0 * exact);
        assert!(l.pareto_k.iter().all(|&k| k < K_WARN));
    }

    #[test]
    fn gpd_fit_recovers_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (k, sigma) = (0.4, 2.0);
        let mut x: Vec<f64> = (0..5000)
            .map(|_| gpd_quantile(rand::Rng::random::<f64>(&mut rng), k, sigma))
            .collect();
        x.sort_by(f64::total_cmp);
        let (kh, sh) = gpd_fit(&x);
        assert!((kh - k).abs() < 0.06, "{kh}");
        assert!((sh / sigma - 1.0).abs() < 0.1, "{sh}");
        let (km, _) = gpd_fit_moments(&x);
        assert!(km.is_finite());
    }

    #[test]
    fn smoothing_caps_at_raw_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ratios: Vec<f64> = (0..1000).map(|_| Normal::new(0.0, 2.0).unwrap().sample(&mut rng)).collect();
        let (lw, k) = psis_smooth(&ratios);
        assert!(lw.iter().all(|&w| w <= 0.0));
        assert!(k.is_finite());
    }

    #[test]
    fn jensen_lppd_bound_and_nonnegative_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = Normal::new(-1.0, 0.5).unwrap();
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..8).map(|_| d.sample(&mut rng)).collect()).collect();
        let mean_total = rows.iter().map(|r| r.iter().sum::<f64>()).sum::<f64>() / 300.0;
        let w = waic(&PointwiseLogLik::from_rows(rows).unwrap()).unwrap();
        assert!(w.lppd >= mean_total);
        assert!(w.p_waic >= 0.0);
    }

    proptest! {
        #[test]
        fn invariant_to_draw_order(seed in 0u64..500, rot in 1usize..199) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Normal::new(-1.5, 0.8).unwrap();
            let rows: Vec<Vec<f64>> = (0..200).map(|_| (0..4).map(|_| d.sample(&mut rng)).collect()).collect();
            let mut moved = rows.clone();
            moved.rotate_left(rot);
            let a = PointwiseLogLik::from_rows(rows).unwrap();
            let b = PointwiseLogLik::from_rows(moved).unwrap();
            prop_assert!((waic(&a).unwrap().waic - waic(&b).unwrap().waic).abs() < 1e-9);
            prop_assert!((looic(&a).unwrap().looic - looic(&b).unwrap().looic).abs() < 1e-9);
        }
    }

    fn toy_dataset() -> Dataset {
        let m = |home, away, d| MatchRecord {
            home,
            away,
            set_diff: SetDiff::new(d).unwrap(),
        };
        Dataset::new(vec!["A".into(), "B".into()], vec![m(0, 1, 3), m(1, 0, -1)]).unwrap()
    }

    #[test]
    fn pointwise_rows_sum_to_total() {
        let ds = toy_dataset();
        let spec = ModelSpec::ordered(2);
        let draws = [vec![-1.0, 0.0, 0.1, 0.2, 0.3, 0.5], vec![-2.0, 0.2, 0.0, -0.1, 0.4, -0.3]];
        let chain = Chain {
            draws: draws.concat(),
            iterations: vec![1, 2],
            log_post: vec![0.0; 2],
            stats: None,
        };
        let set = ChainSet::new(spec.param_names(&ds.teams), vec![chain]).unwrap();
        let pll = pointwise_loglik(&set, &spec, &ds).unwrap();
        assert_eq!((pll.n_draws, pll.n_obs), (2, 2));
        for (s, d) in draws.iter().enumerate() {
            let total = spec.log_lik(&ds, d).unwrap();
            assert!((pll.row(s).iter().sum::<f64>() - total).abs() < 1e-12);
        }
        let short = ChainSet::from_scalar_chains(vec![vec![0.0]]).unwrap();
        assert!(pointwise_loglik(&short, &spec, &ds).is_err());
    }

    #[test]
    fn comparison_csv_shape() {
        let pll = PointwiseLogLik::from_rows(vec![vec![-1.0, -2.0]; 200]).unwrap();
        let rows = vec![compare("a", &pll).unwrap(), compare("b", &pll).unwrap()];
        let mut buf = Vec::new();
        write_comparison_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("model,WAIC,LOOIC"));
    }
}
