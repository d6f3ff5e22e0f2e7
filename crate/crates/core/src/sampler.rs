//! Adaptive random-walk Metropolis over an unconstrained log density.
//!
//! Each chain proposes full-vector Gaussian moves
//! `x' = x + s * d .* N(0, I)`. During warmup the global scale `s` follows a
//! Robbins-Monro recursion on `log s` with gain `t^-0.6` towards the target
//! acceptance rate. Half-way through warmup the per-coordinate shape `d` is
//! set from the sample standard deviations of the second quarter of warmup,
//! `s` is reset and adapted again. Both are frozen once warmup ends.
//!
//! Warmup and kept counts are in thinned units: a chain runs
//! `total_iterations` steps, of which the first `warmup * thin` adapt, and
//! records every `thin`-th step thereafter, giving
//! `floor(total_iterations / thin) - warmup` kept draws.

use std::io::{Read, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

const INIT_ATTEMPTS: usize = 100;
const ADAPT_DECAY: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub total_iterations: usize,
    pub warmup: usize,
    pub thin: usize,
    pub seed: u64,
    pub target_acceptance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 3,
            total_iterations: 16_000,
            warmup: 2_000,
            thin: 2,
            seed: 1,
            target_acceptance: 0.234,
        }
    }
}

impl SamplerConfig {
    /// 3 chains, 16000 iterations, thin 2, warmup 2000: 3 x 6000 kept.
    pub fn ordered_default() -> Self {
        SamplerConfig::default()
    }

    /// 3 chains, 40000 iterations, thin 5, warmup 2000: 3 x 6000 kept.
    pub fn zdts_default() -> Self {
        SamplerConfig {
            total_iterations: 40_000,
            thin: 5,
            ..SamplerConfig::default()
        }
    }

    pub fn for_model(spec: &ModelSpec) -> Self {
        match spec {
            ModelSpec::Ordered { .. } => Self::ordered_default(),
            ModelSpec::Zdts { .. } => Self::zdts_default(),
        }
    }

    pub fn kept_per_chain(&self) -> usize {
        (self.total_iterations / self.thin.max(1)).saturating_sub(self.warmup)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.chains == 0 {
            return bad("at least one chain required");
        }
        if self.thin == 0 {
            return bad("thin must be >= 1");
        }
        if self.total_iterations / self.thin <= self.warmup {
            return bad("total_iterations / thin must exceed warmup");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad("target_acceptance must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Something the sampler can evaluate.
pub trait LogDensity: Sync {
    fn log_density(&self, x: &[f64]) -> Result<f64>;
}

impl<F> LogDensity for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        Ok(self(x))
    }
}

/// Log posterior of a model on a dataset.
pub struct Posterior<'a> {
    pub spec: &'a ModelSpec,
    pub dataset: &'a Dataset,
}

impl LogDensity for Posterior<'_> {
    fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.spec.log_posterior(self.dataset, x)
    }
}

fn eval<D: LogDensity + ?Sized>(density: &D, x: &[f64]) -> Result<f64> {
    let v = density.log_density(x)?;
    if v.is_nan() {
        return Err(Error::NanDensity(x.to_vec()));
    }
    Ok(v)
}

/// Uniform(-0.5, 0.5) start, redrawn until the density is finite.
pub fn initialize_chain<D, R>(density: &D, dim: usize, rng: &mut R) -> Result<Vec<f64>>
where
    D: LogDensity + ?Sized,
    R: Rng + ?Sized,
{
    for _ in 0..INIT_ATTEMPTS {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        if eval(density, &x)?.is_finite() {
            return Ok(x);
        }
    }
    Err(Error::NoFiniteStart(INIT_ATTEMPTS))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub warmup_acceptance: f64,
    pub acceptance: f64,
    /// Final global scale `s`.
    pub step_scale: f64,
    /// Final per-coordinate shape `d`.
    pub proposal_sd: Vec<f64>,
    /// Scale in force at each kept draw.
    pub scale_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    /// Kept draws, row-major `n_kept x dim`.
    pub draws: Vec<f64>,
    /// Raw iteration number of each kept draw.
    pub iterations: Vec<usize>,
    pub log_post: Vec<f64>,
    pub stats: Option<ChainStats>,
}

/// Kept draws from several chains of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    pub names: Vec<String>,
    pub chains: Vec<Chain>,
}

impl ChainSet {
    pub fn new(names: Vec<String>, chains: Vec<Chain>) -> Result<Self> {
        let dim = names.len();
        let n = chains.first().map_or(0, |c| c.log_post.len());
        for c in &chains {
            if c.log_post.len() != n || c.draws.len() != n * dim || c.iterations.len() != n {
                return Err(Error::InvalidArgument("chains differ in length or dimension".into()));
            }
        }
        Ok(ChainSet { names, chains })
    }

    /// Single-parameter chains, mostly for diagnostics tests.
    pub fn from_scalar_chains(chains: Vec<Vec<f64>>) -> Result<Self> {
        let chains = chains
            .into_iter()
            .map(|draws| Chain {
                iterations: (1..=draws.len()).collect(),
                log_post: vec![0.0; draws.len()],
                draws,
                stats: None,
            })
            .collect();
        ChainSet::new(vec!["x".into()], chains)
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_kept(&self) -> usize {
        self.chains.first().map_or(0, |c| c.log_post.len())
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains() * self.n_kept()
    }

    pub fn draw(&self, chain: usize, i: usize) -> &[f64] {
        let d = self.dim();
        &self.chains[chain].draws[i * d..(i + 1) * d]
    }

    /// All kept draws, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let d = self.dim();
        self.chains.iter().flat_map(move |c| c.draws.chunks_exact(d))
    }

    /// Draw number `t` in chain-major order.
    pub fn flat_draw(&self, t: usize) -> &[f64] {
        let n = self.n_kept();
        self.draw(t / n, t % n)
    }

    pub fn param(&self, chain: usize, j: usize) -> Vec<f64> {
        let d = self.dim();
        self.chains[chain].draws.iter().skip(j).step_by(d).copied().collect()
    }

    /// One vector per chain for parameter `j`.
    pub fn param_chains(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains()).map(|c| self.param(c, j)).collect()
    }

    pub fn pooled(&self, j: usize) -> Vec<f64> {
        self.param_chains(j).concat()
    }

    /// Applies a per-draw transform, keeping chain structure.
    pub fn map_draws<F>(&self, names: Vec<String>, f: F) -> Result<ChainSet>
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
    {
        let chains = self
            .chains
            .iter()
            .map(|c| {
                let mut draws = Vec::with_capacity(c.log_post.len() * names.len());
                for x in c.draws.chunks_exact(self.dim()) {
                    let y = f(x)?;
                    if y.len() != names.len() {
                        return Err(Error::DimensionMismatch {
                            expected: names.len(),
                            got: y.len(),
                        });
                    }
                    draws.extend(y);
                }
                Ok(Chain {
                    draws,
                    iterations: c.iterations.clone(),
                    log_post: c.log_post.clone(),
                    stats: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ChainSet::new(names, chains)
    }

    /// CSV with header `chain,iteration,<params...>,lp__`; chains 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["chain".to_string(), "iteration".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("lp__".into());
        wtr.write_record(&header)?;
        let d = self.dim();
        for (ci, c) in self.chains.iter().enumerate() {
            for (i, x) in c.draws.chunks_exact(d).enumerate() {
                let mut row = Vec::with_capacity(d + 3);
                row.push((ci + 1).to_string());
                row.push(c.iterations[i].to_string());
                row.extend(x.iter().map(|v| v.to_string()));
                row.push(c.log_post[i].to_string());
                wtr.write_record(&row)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let n = header.len();
        if n < 3 || &header[0] != "chain" || &header[1] != "iteration" || &header[n - 1] != "lp__" {
            return Err(Error::InvalidArgument("chains CSV needs chain,iteration,...,lp__".into()));
        }
        let names: Vec<String> = header.iter().skip(2).take(n - 3).map(String::from).collect();
        let mut chains: Vec<Chain> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let num = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line,
                    msg: format!("`{s}` is not a number"),
                })
            };
            let ci: usize = rec[0].parse().map_err(|_| Error::MalformedRow {
                line,
                msg: "bad chain id".into(),
            })?;
            if ci == 0 || ci > chains.len() + 1 {
                return Err(Error::MalformedRow {
                    line,
                    msg: format!("chain ids must be 1-based and contiguous, got {ci}"),
                });
            }
            if ci == chains.len() + 1 {
                chains.push(Chain {
                    draws: Vec::new(),
                    iterations: Vec::new(),
                    log_post: Vec::new(),
                    stats: None,
                });
            }
            let c = &mut chains[ci - 1];
            c.iterations.push(num(&rec[1])? as usize);
            for k in 2..n - 1 {
                c.draws.push(num(&rec[k])?);
            }
            c.log_post.push(num(&rec[n - 1])?);
        }
        ChainSet::new(names, chains)
    }
}

struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Welford {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Sample SDs shrunk towards 1e-3 for short windows.
    fn regularized_sd(&self) -> Vec<f64> {
        let n = self.n as f64;
        let w = n / (n + 5.0);
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                (w * var + 1e-3 * (1.0 - w)).sqrt()
            })
            .collect()
    }
}

fn run_chain<D: LogDensity + ?Sized>(
    density: &D,
    dim: usize,
    config: &SamplerConfig,
    chain: usize,
) -> Result<Chain> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);

    let mut x = initialize_chain(density, dim, &mut rng)?;
    let mut lp = eval(density, &x)?;

    let default_log_scale = (2.38 / (dim as f64).sqrt()).ln();
    let mut log_scale = default_log_scale;
    let mut shape = vec![1.0; dim];

    let raw_warmup = config.warmup * config.thin;
    let shape_at = raw_warmup / 2;
    let window_start = raw_warmup / 4;
    let mut window = Welford::new(dim);
    let mut adapt_t = 0usize;

    let n_kept = config.kept_per_chain();
    let mut draws = Vec::with_capacity(n_kept * dim);
    let mut iterations = Vec::with_capacity(n_kept);
    let mut log_post = Vec::with_capacity(n_kept);
    let mut scale_trace = Vec::with_capacity(n_kept);
    let (mut acc_warm, mut acc_main) = (0usize, 0usize);

    let mut proposal = vec![0.0; dim];
    for it in 1..=config.total_iterations {
        let scale = log_scale.exp();
        for ((p, xi), di) in proposal.iter_mut().zip(&x).zip(&shape) {
            let z: f64 = rng.sample(StandardNormal);
            *p = xi + scale * di * z;
        }
        let lp_new = eval(density, &proposal)?;
        let log_ratio = lp_new - lp;
        let alpha = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let accepted = rng.random::<f64>() < alpha;
        if accepted {
            x.copy_from_slice(&proposal);
            lp = lp_new;
        }

        if it <= raw_warmup {
            acc_warm += usize::from(accepted);
            adapt_t += 1;
            log_scale += (adapt_t as f64).powf(-ADAPT_DECAY) * (alpha - config.target_acceptance);
            if it > window_start && it <= shape_at {
                window.push(&x);
            }
            if it == shape_at && window.n >= 10 {
                shape = window.regularized_sd();
                log_scale = default_log_scale;
                adapt_t = 0;
            }
        } else {
            acc_main += usize::from(accepted);
            if it % config.thin == 0 {
                draws.extend_from_slice(&x);
                iterations.push(it);
                log_post.push(lp);
                scale_trace.push(log_scale.exp());
            }
        }
    }

    if raw_warmup > 0 && acc_warm == 0 {
        return Err(Error::NoAcceptance(chain));
    }
    let main_steps = config.total_iterations - raw_warmup;
    Ok(Chain {
        draws,
        iterations,
        log_post,
        stats: Some(ChainStats {
            warmup_acceptance: acc_warm as f64 / raw_warmup.max(1) as f64,
            acceptance: acc_main as f64 / main_steps.max(1) as f64,
            step_scale: log_scale.exp(),
            proposal_sd: shape,
            scale_trace,
        }),
    })
}

/// Runs `config.chains` independent chains in parallel. Chain `c` draws
/// from the ChaCha stream `(seed, c)`, so output is identical across runs
/// and thread counts.
pub fn run_chains<D: LogDensity + ?Sized>(
    density: &D,
    dim: usize,
    names: Vec<String>,
    config: &SamplerConfig,
) -> Result<ChainSet> {
    config.validate()?;
    if names.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: names.len(),
        });
    }
    let chains = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(density, dim, config, c))
        .collect::<Result<Vec<_>>>()?;
    ChainSet::new(names, chains)
}

/// Fits a model to a dataset.
pub fn fit(spec: &ModelSpec, dataset: &Dataset, config: &SamplerConfig) -> Result<ChainSet> {
    let posterior = Posterior { spec, dataset };
    run_chains(&posterior, spec.dim(), spec.param_names(&dataset.teams), config)
}
