//! Convergence diagnostics: split-Rhat, effective sample size and the
//! Raftery-Lewis run-length diagnostic.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainSet;

/// Conventional Raftery-Lewis settings.
pub const RL_QUANTILE: f64 = 0.025;
pub const RL_ACCURACY: f64 = 0.005;
pub const RL_PROBABILITY: f64 = 0.95;
/// Burn-in convergence tolerance on the two-state chain.
const RL_CONVERGE_EPS: f64 = 0.001;

/// Reported effective sample sizes are capped at this multiple of the
/// number of draws.
pub const ESS_CAP: f64 = 1.05;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with divisor `n - 1`.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn check_chains(chains: &[Vec<f64>]) -> Result<()> {
    if chains.len() < 2 {
        return Err(Error::Diagnostic(format!("need at least 2 chains, got {}", chains.len())));
    }
    let n = chains[0].len();
    if n < 4 {
        return Err(Error::Diagnostic(format!("need at least 4 draws per chain, got {n}")));
    }
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::Diagnostic("chains differ in length".into()));
    }
    if chains.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Diagnostic("non-finite draw".into()));
    }
    Ok(())
}

/// Split-Rhat for one parameter given per-chain draws.
pub fn split_rhat_values(chains: &[Vec<f64>]) -> Result<f64> {
    check_chains(chains)?;
    let n = chains[0].len();
    let half = n / 2;
    // An odd middle draw is dropped.
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..]])
        .collect();
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let vars: Vec<f64> = halves.iter().map(|h| variance(h)).collect();
    let w = mean(&vars);
    if !(w > 0.0) {
        return Err(Error::Diagnostic("zero within-chain variance".into()));
    }
    let nh = half as f64;
    let b = nh * variance(&means);
    let var_plus = (nh - 1.0) / nh * w + b / nh;
    Ok((var_plus / w).sqrt())
}

pub fn split_rhat(chains: &ChainSet, param: usize) -> Result<f64> {
    split_rhat_values(&chains.param_chains(param))
}

/// Biased (divisor `n`) autocovariance at one lag.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// monotone sequence truncation. Autocovariances are computed lag by lag,
/// only as far as the truncation needs.
pub fn effective_sample_size_values(chains: &[Vec<f64>]) -> Result<f64> {
    check_chains(chains)?;
    let m_chains = chains.len();
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &m)| autocov(c, m, lag))
            .sum::<f64>()
            / m_chains as f64
    };
    let chain_vars: Vec<f64> = chains
        .iter()
        .zip(&means)
        .map(|(c, &m)| autocov(c, m, 0) * nf / (nf - 1.0))
        .collect();
    let mean_var = mean(&chain_vars);
    let var_plus = mean_var * (nf - 1.0) / nf + variance(&means);
    if !(var_plus > 0.0) {
        return Err(Error::Diagnostic("zero variance".into()));
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n + 2];
    let mut rho_even = 1.0;
    rho_hat[0] = rho_even;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 0;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        t += 2;
        rho_even = rho(t);
        rho_odd = rho(t + 1);
        if !(rho_even.is_finite() && rho_odd.is_finite()) {
            return Err(Error::Diagnostic("non-finite autocorrelation".into()));
        }
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t] = rho_even;
            rho_hat[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho_hat[max_t] = rho_even;
    }
    let mut k = 0;
    while k + 3 < max_t {
        let prev = rho_hat[k] + rho_hat[k + 1];
        if rho_hat[k + 2] + rho_hat[k + 3] > prev {
            rho_hat[k + 2] = prev / 2.0;
            rho_hat[k + 3] = prev / 2.0;
        }
        k += 2;
    }
    let total = (m_chains * n) as f64;
    // An empty head (max_t == 0) still counts lag 0.
    let head: f64 = rho_hat[..max_t.max(1)].iter().sum();
    let tau = (-1.0 + 2.0 * head + rho_hat[max_t]).max(1.0 / total.log10());
    Ok(total / tau)
}

pub fn effective_sample_size(chains: &ChainSet, param: usize) -> Result<f64> {
    effective_sample_size_values(&chains.param_chains(param))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RafteryLewis {
    /// Burn-in.
    pub m: usize,
    /// Required run length including burn-in.
    pub n: usize,
    /// Run length needed for independent draws.
    pub n_min: usize,
    /// Dependence factor `N / Nmin`.
    pub i: f64,
    pub thin: usize,
}

/// Inverse standard normal cdf (Wichura's AS 241, about 1e-16 relative).
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return if p == 0.0 {
            f64::NEG_INFINITY
        } else if p == 1.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2509.0809287301226727 * r + 33430.575583588128105) * r
            + 67265.770927008700853)
            * r
            + 45921.953931549871457)
            * r
            + 13731.693765509461125)
            * r
            + 1971.5909503065514427)
            * r
            + 133.14166789178437745)
            * r
            + 3.387132872796366608;
        let den = ((((((5226.495278852545925 * r + 28729.085735721942674) * r
            + 39307.89580009271061)
            * r
            + 21213.794301586595867)
            * r
            + 5394.1960214247511077)
            * r
            + 687.1870074920579083)
            * r
            + 42.313330701600911252)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = ((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734;
        let den = ((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r
            + 0.0151986665636164571966)
            * r
            + 0.14810397642748007459)
            * r
            + 0.68976733498510000455)
            * r
            + 1.6763848301838038494)
            * r
            + 2.05319162663775882187)
            * r
            + 1.0;
        num / den
    } else {
        let r = r - 5.0;
        let num = ((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772;
        let den = ((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
            + 1.8463183175100546818e-5)
            * r
            + 7.868691311456132591e-4)
            * r
            + 0.0148753612908506148525)
            * r
            + 0.13692988092273580531)
            * r
            + 0.59983220655588793769)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// `ceil(q(1-q) (z_{(1+s)/2} / r)^2)`.
pub fn raftery_nmin(q: f64, r: f64, s: f64) -> usize {
    let z = normal_quantile(0.5 * (1.0 + s));
    (q * (1.0 - q) * (z / r).powi(2)).ceil() as usize
}

/// Type-7 sample quantile.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Raftery-Lewis diagnostic for one chain.
pub fn raftery_lewis(chain: &[f64], q: f64, r: f64, s: f64) -> Result<RafteryLewis> {
    if !(q > 0.0 && q < 1.0 && r > 0.0 && s > 0.0 && s < 1.0) {
        return Err(Error::InvalidArgument(format!("bad Raftery-Lewis settings q={q} r={r} s={s}")));
    }
    let n_min = raftery_nmin(q, r, s);
    if chain.len() < n_min {
        return Err(Error::ChainTooShort {
            len: chain.len(),
            n_min,
        });
    }
    let mut sorted = chain.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = quantile(&sorted, q);
    let dichot: Vec<usize> = chain.iter().map(|&x| usize::from(x <= cut)).collect();

    let mut kthin = 0;
    let thinned = loop {
        kthin += 1;
        let z: Vec<usize> = dichot.iter().step_by(kthin).copied().collect();
        let len = z.len();
        if len < 3 {
            return Err(Error::Diagnostic("no thinning interval gives a Markov chain".into()));
        }
        let mut tab = [[[0.0f64; 2]; 2]; 2];
        for w in z.windows(3) {
            tab[w[0]][w[1]][w[2]] += 1.0;
        }
        for cell in tab.iter_mut().flatten().flatten() {
            *cell = cell.max(1.0);
        }
        let mut g2 = 0.0;
        for i1 in 0..2 {
            for i2 in 0..2 {
                for i3 in 0..2 {
                    let row = tab[i1][i2][0] + tab[i1][i2][1];
                    let col = tab[0][i2][i3] + tab[1][i2][i3];
                    let mid: f64 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| tab[a][i2][b]).sum();
                    let fitted = row * col / mid;
                    g2 += 2.0 * tab[i1][i2][i3] * (tab[i1][i2][i3] / fitted).ln();
                }
            }
        }
        let bic = g2 - 2.0 * ((len - 2) as f64).ln();
        if bic < 0.0 {
            break z;
        }
    };

    let mut tran = [[0.0f64; 2]; 2];
    for w in thinned.windows(2) {
        tran[w[0]][w[1]] += 1.0;
    }
    let alpha = tran[0][1] / (tran[0][0] + tran[0][1]);
    let beta = tran[1][0] / (tran[1][0] + tran[1][1]);
    if !(alpha > 0.0 && beta > 0.0) || !(alpha.is_finite() && beta.is_finite()) {
        return Err(Error::Diagnostic("indicator chain never switches state".into()));
    }
    let k = kthin as f64;
    let burn = ((RL_CONVERGE_EPS * (alpha + beta) / alpha.max(beta)).ln() / (1.0 - alpha - beta).abs().ln()).ceil();
    // A burn-in of zero when the two-state chain mixes in one step.
    let m = if burn.is_finite() { (burn.max(0.0) * k) as usize } else { 0 };
    let phi = normal_quantile(0.5 * (1.0 + s));
    let prec = (2.0 - alpha - beta) * alpha * beta * phi * phi / ((alpha + beta).powi(3) * r * r);
    let keep = (prec * k).ceil() as usize;
    let n = m + keep;
    Ok(RafteryLewis {
        m,
        n,
        n_min,
        i: n as f64 / n_min as f64,
        thin: kthin,
    })
}

/// Raftery-Lewis with the conventional settings.
pub fn raftery_lewis_default(chain: &[f64]) -> Result<RafteryLewis> {
    raftery_lewis(chain, RL_QUANTILE, RL_ACCURACY, RL_PROBABILITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub n_eff: f64,
    pub rhat: f64,
    /// Worst chain (largest N); `None` when chains are shorter than Nmin.
    pub raftery: Option<RafteryLewis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub params: Vec<ParamDiagnostics>,
}

impl DiagnosticReport {
    pub fn compute(chains: &ChainSet) -> Result<Self> {
        let cap = ESS_CAP * chains.total_draws() as f64;
        let params = (0..chains.dim())
            .into_par_iter()
            .map(|j| {
                let per_chain = chains.param_chains(j);
                let rhat = split_rhat_values(&per_chain)?;
                let n_eff = effective_sample_size_values(&per_chain)?.min(cap);
                let mut raftery: Option<RafteryLewis> = None;
                for c in &per_chain {
                    match raftery_lewis_default(c) {
                        Ok(rl) => {
                            if raftery.map_or(true, |cur| rl.n > cur.n) {
                                raftery = Some(rl);
                            }
                        }
                        Err(Error::ChainTooShort { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
                Ok(ParamDiagnostics {
                    name: chains.names[j].clone(),
                    n_eff,
                    rhat,
                    raftery,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DiagnosticReport { params })
    }

    /// CSV `parameter,n_eff,Rhat,M,N,Nmin,I`; Raftery-Lewis cells are `NA`
    /// when the chains were too short.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["parameter", "n_eff", "Rhat", "M", "N", "Nmin", "I"])?;
        for p in &self.params {
            let mut row = vec![p.name.clone(), format!("{:.0}", p.n_eff), format!("{:.3}", p.rhat)];
            match p.raftery {
                Some(rl) => row.extend([
                    rl.m.to_string(),
                    rl.n.to_string(),
                    rl.n_min.to_string(),
                    format!("{:.2}", rl.i),
                ]),
                None => row.extend(std::iter::repeat("NA".to_string()).take(4)),
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn iid(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, phi: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sd = (1.0 - phi * phi).sqrt();
        let mut x: f64 = StandardNormal.sample(&mut rng);
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = phi * x + sd * e;
                x
            })
            .collect()
    }

    #[test]
    fn normal_quantile_known_values() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
        assert!((normal_quantile(0.5)).abs() < 1e-16);
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-12);
        assert!((normal_quantile(0.025) + normal_quantile(0.975)).abs() < 1e-15);
    }

    #[test]
    fn nmin_conventional() {
        assert_eq!(raftery_nmin(RL_QUANTILE, RL_ACCURACY, RL_PROBABILITY), 3746);
    }

    #[test]
    fn rhat_iid_near_one() {
        let chains: Vec<_> = (0..3).map(|c| iid(6000, c)).collect();
        let r = split_rhat_values(&chains).unwrap();
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn rhat_detects_shift() {
        let mut chains: Vec<_> = (0..3).map(|c| iid(6000, 10 + c)).collect();
        chains[2].iter_mut().for_each(|v| *v += 5.0);
        assert!(split_rhat_values(&chains).unwrap() > 1.5);
    }

    #[test]
    fn rhat_detects_within_chain_drift() {
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|c| iid(1000, c).iter().enumerate().map(|(i, v)| v + i as f64 / 100.0).collect())
            .collect();
        assert!(split_rhat_values(&chains).unwrap() > 1.5);
    }

    #[test]
    fn rhat_rejects_constant_and_small_inputs() {
        assert!(split_rhat_values(&[vec![1.0; 10], vec![1.0; 10]]).is_err());
        assert!(split_rhat_values(&[iid(100, 1)]).is_err());
        assert!(split_rhat_values(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn rhat_over_seeds() {
        for seed in 0..50 {
            let chains: Vec<_> = (0..3).map(|c| iid(2000, seed * 10 + c)).collect();
            let r = split_rhat_values(&chains).unwrap();
            assert!((0.999..=1.02).contains(&r), "seed {seed}: {r}");
        }
    }

    #[test]
    fn ess_iid() {
        let chains: Vec<_> = (0..3).map(|c| iid(6000, 20 + c)).collect();
        let ess = effective_sample_size_values(&chains).unwrap();
        assert!((ess / 18000.0 - 1.0).abs() < 0.1, "{ess}");
    }

    #[test]
    fn ess_ar1_analytic() {
        let phi = 0.5;
        let chains: Vec<_> = (0..3).map(|c| ar1(20000, phi, 30 + c)).collect();
        let ess = effective_sample_size_values(&chains).unwrap();
        let expected = 60000.0 * (1.0 - phi) / (1.0 + phi);
        assert!((ess / expected - 1.0).abs() < 0.15, "{ess} vs {expected}");
    }

    #[test]
    fn ess_antithetic_is_super_efficient() {
        let chains: Vec<_> = (0..3).map(|c| ar1(4000, -0.9, 40 + c)).collect();
        let ess = effective_sample_size_values(&chains).unwrap();
        assert!(ess > 12000.0, "{ess}");
        let set = ChainSet::from_scalar_chains(chains).unwrap();
        let report = DiagnosticReport::compute(&set).unwrap();
        assert!(report.params[0].n_eff <= 1.05 * 12000.0 + 1e-9);
    }

    #[test]
    fn ess_affine_invariant() {
        let chains: Vec<_> = (0..2).map(|c| ar1(3000, 0.7, 50 + c)).collect();
        let moved: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|v| 3.0 * v - 7.0).collect()).collect();
        let a = effective_sample_size_values(&chains).unwrap();
        let b = effective_sample_size_values(&moved).unwrap();
        assert!((a - b).abs() / a < 1e-8);
    }

    #[test]
    fn raftery_iid_near_one() {
        let rl = raftery_lewis_default(&iid(18000, 60)).unwrap();
        assert_eq!(rl.n_min, 3746);
        assert!((rl.i - 1.0).abs() < 0.15, "{rl:?}");
    }

    #[test]
    fn raftery_ar1_strong_dependence() {
        let rl = raftery_lewis_default(&ar1(18000, 0.95, 61)).unwrap();
        assert!(rl.i > 5.0, "{rl:?}");
    }

    #[test]
    fn raftery_short_chain_errors() {
        assert!(matches!(
            raftery_lewis_default(&iid(3000, 62)),
            Err(Error::ChainTooShort { n_min: 3746, .. })
        ));
    }

    #[test]
    fn raftery_dependence_never_far_below_one() {
        for (seed, phi) in [(70, 0.0), (71, 0.3), (72, -0.5), (73, 0.8)] {
            let rl = raftery_lewis_default(&ar1(8000, phi, seed)).unwrap();
            assert!(rl.i >= 0.95, "phi {phi}: {rl:?}");
        }
    }

    #[test]
    fn report_csv_layout() {
        let set = ChainSet::from_scalar_chains((0..3).map(|c| iid(4000, 80 + c)).collect()).unwrap();
        let report = DiagnosticReport::compute(&set).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("parameter,n_eff,Rhat,M,N,Nmin,I"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[0], "x");
        assert_eq!(row[5], "3746");
    }

    #[test]
    fn report_marks_short_chains() {
        let set = ChainSet::from_scalar_chains((0..2).map(|c| iid(500, 90 + c)).collect()).unwrap();
        let report = DiagnosticReport::compute(&set).unwrap();
        assert!(report.params[0].raftery.is_none());
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains("NA"));
    }
}
