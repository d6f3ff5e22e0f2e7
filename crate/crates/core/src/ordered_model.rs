//! Ordered-multinomial (proportional-odds) model for set-differences.
//!
//! The cumulative logit of category k is `c_k - (A_home - A_away)`, so a
//! larger ability gap shifts mass towards the home-win end of the support.
//! Sampling happens in an unconstrained space
//! `[c_1, d_2..d_5, A_2..A_p]` with `c_k = c_{k-1} + exp(d_k)` and
//! `A_1 = -(A_2 + ... + A_p)`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SetDiff};
use crate::error::{Error, Result};

pub const N_CUTPOINTS: usize = 5;

/// Prior standard deviation of every free cutpoint and ability.
pub const PRIOR_SD: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderedParameterVector {
    pub cutpoints: [f64; N_CUTPOINTS],
    /// All p abilities; the first is minus the sum of the rest.
    pub abilities: Vec<f64>,
}

impl OrderedParameterVector {
    /// Cutpoints plus the free abilities `A_2..A_p`.
    pub fn new(cutpoints: [f64; N_CUTPOINTS], free_abilities: &[f64]) -> Result<Self> {
        check_ordered(&cutpoints)?;
        Ok(OrderedParameterVector {
            cutpoints,
            abilities: with_sum_to_zero(free_abilities),
        })
    }

    pub fn dim(n_teams: usize) -> usize {
        N_CUTPOINTS + n_teams - 1
    }

    pub fn from_unconstrained(theta: &[f64], n_teams: usize) -> Result<Self> {
        let dim = Self::dim(n_teams);
        if theta.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: theta.len(),
            });
        }
        let mut cutpoints = [0.0; N_CUTPOINTS];
        cutpoints[0] = theta[0];
        for k in 1..N_CUTPOINTS {
            cutpoints[k] = cutpoints[k - 1] + theta[k].exp();
        }
        Self::new(cutpoints, &theta[N_CUTPOINTS..])
    }

    /// Inverse of [`from_unconstrained`](Self::from_unconstrained).
    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(N_CUTPOINTS + self.abilities.len() - 1);
        theta.push(self.cutpoints[0]);
        for k in 1..N_CUTPOINTS {
            theta.push((self.cutpoints[k] - self.cutpoints[k - 1]).ln());
        }
        theta.extend_from_slice(&self.abilities[1..]);
        theta
    }

    pub fn free_abilities(&self) -> &[f64] {
        &self.abilities[1..]
    }
}

/// Full ability vector from the free components `x_2..x_p`.
pub fn with_sum_to_zero(free: &[f64]) -> Vec<f64> {
    let mut full = Vec::with_capacity(free.len() + 1);
    full.push(-free.iter().sum::<f64>());
    full.extend_from_slice(free);
    full
}

fn check_ordered(c: &[f64]) -> Result<()> {
    if c.iter().all(|v| v.is_finite()) && c.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(Error::UnorderedCutpoints(c.to_vec()))
    }
}

/// Probabilities of the six ordered categories for one match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryProbs(pub [f64; 6]);

impl CategoryProbs {
    pub fn prob(&self, d: SetDiff) -> f64 {
        self.0[d.index()]
    }

    /// `gamma_k = P(Y <= y^(k))`, k = 1..6.
    pub fn cumulative(&self) -> [f64; 6] {
        let mut acc = 0.0;
        self.0.map(|p| {
            acc += p;
            acc
        })
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `sigma(b) - sigma(a)` for `a < b` without cancellation in either tail.
fn logistic_diff(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        logistic(-a) - logistic(-b)
    } else {
        logistic(b) - logistic(a)
    }
}

/// Category probabilities given the home-minus-away ability gap.
pub fn category_probs_from_gap(cutpoints: &[f64; N_CUTPOINTS], gap: f64) -> CategoryProbs {
    let a: Vec<f64> = cutpoints.iter().map(|c| c - gap).collect();
    let mut p = [0.0; 6];
    p[0] = logistic(a[0]);
    for k in 1..N_CUTPOINTS {
        p[k] = logistic_diff(a[k - 1], a[k]);
    }
    p[5] = logistic(-a[4]);
    CategoryProbs(p)
}

pub fn ordered_category_probs(
    home: usize,
    away: usize,
    params: &OrderedParameterVector,
) -> Result<CategoryProbs> {
    check_ordered(&params.cutpoints)?;
    let p = params.abilities.len();
    if home >= p || away >= p {
        return Err(Error::UnknownTeam(format!("index {}", home.max(away))));
    }
    Ok(category_probs_from_gap(
        &params.cutpoints,
        params.abilities[home] - params.abilities[away],
    ))
}

/// Per-match `log pi_{i, Phi(y_i)}`. A zero probability gives `-inf`.
pub fn ordered_pointwise_log_lik(
    dataset: &Dataset,
    params: &OrderedParameterVector,
) -> Result<Vec<f64>> {
    dataset
        .matches
        .iter()
        .map(|m| Ok(ordered_category_probs(m.home, m.away, params)?.prob(m.set_diff).ln()))
        .collect()
}

pub fn ordered_log_lik(dataset: &Dataset, params: &OrderedParameterVector) -> Result<f64> {
    Ok(ordered_pointwise_log_lik(dataset, params)?.iter().sum())
}

pub(crate) fn normal_log_density(x: f64, sd: f64) -> f64 {
    let z = x / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Independent `N(0, 100^2)` on each cutpoint and each free ability,
/// normalising constants included.
pub fn ordered_log_prior(params: &OrderedParameterVector) -> f64 {
    params
        .cutpoints
        .iter()
        .chain(params.free_abilities())
        .map(|&v| normal_log_density(v, PRIOR_SD))
        .sum()
}

/// `log |d c / d theta|` of the cutpoint transform: the sum of the log
/// increments.
pub fn cutpoint_log_jacobian(theta: &[f64]) -> f64 {
    theta[1..N_CUTPOINTS].iter().sum()
}
