//! ZDTS likelihood with the four linear-predictor variants.
//!
//! `log l1 = mu + home + l_1` and `log l2 = mu + l_2`, where the team terms
//! are
//!
//! | variant | `l_1`                   | `l_2`                   |
//! |---------|-------------------------|-------------------------|
//! | 1       | `att_h + def_a`         | `att_a + def_h`         |
//! | 2       | `ability_h`             | `ability_a`             |
//! | 3       | `ability_h - ability_a` | `0`                     |
//! | 4       | `0`                     | `ability_a - ability_h` |
//!
//! Every team-effect vector sums to zero; the first team's entry is derived.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distributions::{zdts_log_pmf, SkellamParams};
use crate::error::{Error, Result};
use crate::ordered_model::{normal_log_density, with_sum_to_zero};

/// Linear predictors outside `[-30, 30]` are rejected.
pub const MAX_LOG_RATE: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ModelVariant {
    AttackDefense,
    Ability,
    HomeDifference,
    AwayDifference,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::AttackDefense,
        ModelVariant::Ability,
        ModelVariant::HomeDifference,
        ModelVariant::AwayDifference,
    ];

    pub fn number(self) -> u8 {
        match self {
            ModelVariant::AttackDefense => 1,
            ModelVariant::Ability => 2,
            ModelVariant::HomeDifference => 3,
            ModelVariant::AwayDifference => 4,
        }
    }

    /// Human-readable `(l_1, l_2)` columns.
    pub fn predictors(self) -> (&'static str, &'static str) {
        match self {
            ModelVariant::AttackDefense => ("att_h + def_a", "att_a + def_h"),
            ModelVariant::Ability => ("ability_h", "ability_a"),
            ModelVariant::HomeDifference => ("ability_h - ability_a", "0"),
            ModelVariant::AwayDifference => ("0", "ability_a - ability_h"),
        }
    }

    /// Number of team-effect vectors (2 for attack/defense, else 1).
    pub fn n_effects(self) -> usize {
        if self == ModelVariant::AttackDefense {
            2
        } else {
            1
        }
    }
}

impl TryFrom<u8> for ModelVariant {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        ModelVariant::ALL
            .get((v as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("model variant must be 1-4, got {v}")))
    }
}

impl From<ModelVariant> for u8 {
    fn from(v: ModelVariant) -> u8 {
        v.number()
    }
}

/// Prior standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZdtsPrior {
    pub mu_sd: f64,
    pub home_sd: f64,
    pub ability_sd: f64,
}

impl Default for ZdtsPrior {
    fn default() -> Self {
        ZdtsPrior {
            mu_sd: 0.37,
            home_sd: 0.37,
            ability_sd: 1.0,
        }
    }
}

impl ZdtsPrior {
    /// Default SDs multiplied per block, for prior-sensitivity runs.
    pub fn scaled(mu: f64, home: f64, ability: f64) -> Self {
        let d = ZdtsPrior::default();
        ZdtsPrior {
            mu_sd: d.mu_sd * mu,
            home_sd: d.home_sd * home,
            ability_sd: d.ability_sd * ability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Abilities {
    AttackDefense { attack: Vec<f64>, defense: Vec<f64> },
    Single(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZdtsParameterVector {
    pub mu: f64,
    pub home: f64,
    pub variant: ModelVariant,
    pub abilities: Abilities,
}

impl ZdtsParameterVector {
    pub fn dim(n_teams: usize, variant: ModelVariant) -> usize {
        2 + variant.n_effects() * (n_teams - 1)
    }

    /// Layout `[mu, home, free att (p-1), free def (p-1)]` for variant 1,
    /// `[mu, home, free ability (p-1)]` otherwise.
    pub fn from_unconstrained(theta: &[f64], n_teams: usize, variant: ModelVariant) -> Result<Self> {
        let dim = Self::dim(n_teams, variant);
        if theta.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: theta.len(),
            });
        }
        let free = &theta[2..];
        let abilities = match variant {
            ModelVariant::AttackDefense => {
                let (a, d) = free.split_at(n_teams - 1);
                Abilities::AttackDefense {
                    attack: with_sum_to_zero(a),
                    defense: with_sum_to_zero(d),
                }
            }
            _ => Abilities::Single(with_sum_to_zero(free)),
        };
        Ok(ZdtsParameterVector {
            mu: theta[0],
            home: theta[1],
            variant,
            abilities,
        })
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut theta = vec![self.mu, self.home];
        match &self.abilities {
            Abilities::AttackDefense { attack, defense } => {
                theta.extend_from_slice(&attack[1..]);
                theta.extend_from_slice(&defense[1..]);
            }
            Abilities::Single(a) => theta.extend_from_slice(&a[1..]),
        }
        theta
    }

    pub fn n_teams(&self) -> usize {
        match &self.abilities {
            Abilities::AttackDefense { attack, .. } => attack.len(),
            Abilities::Single(a) => a.len(),
        }
    }

    /// Team terms `(l_1, l_2)` for a home/away pairing.
    pub fn team_terms(&self, h: usize, a: usize) -> (f64, f64) {
        match (&self.abilities, self.variant) {
            (Abilities::AttackDefense { attack, defense }, _) => {
                (attack[h] + defense[a], attack[a] + defense[h])
            }
            (Abilities::Single(ab), ModelVariant::Ability) => (ab[h], ab[a]),
            (Abilities::Single(ab), ModelVariant::HomeDifference) => (ab[h] - ab[a], 0.0),
            (Abilities::Single(ab), ModelVariant::AwayDifference) => (0.0, ab[a] - ab[h]),
            (Abilities::Single(ab), ModelVariant::AttackDefense) => (ab[h], ab[a]),
        }
    }

    /// Free team effects, the components the prior is placed on.
    fn free_effects(&self) -> impl Iterator<Item = f64> + '_ {
        let (first, second): (&[f64], &[f64]) = match &self.abilities {
            Abilities::AttackDefense { attack, defense } => (&attack[1..], &defense[1..]),
            Abilities::Single(a) => (&a[1..], &[]),
        };
        first.iter().chain(second).copied()
    }
}

/// `(log l1, log l2)` for one match.
pub fn zdts_log_rates(home_team: usize, away_team: usize, params: &ZdtsParameterVector) -> Result<(f64, f64)> {
    let p = params.n_teams();
    if home_team >= p || away_team >= p {
        return Err(Error::UnknownTeam(format!("index {}", home_team.max(away_team))));
    }
    let (l1, l2) = params.team_terms(home_team, away_team);
    let eta1 = params.mu + params.home + l1;
    let eta2 = params.mu + l2;
    for eta in [eta1, eta2] {
        if eta.is_nan() {
            return Err(Error::InvalidArgument("NaN linear predictor".into()));
        }
        if eta.abs() > MAX_LOG_RATE {
            return Err(Error::RateOverflow(eta));
        }
    }
    Ok((eta1, eta2))
}

pub fn zdts_rates(home_team: usize, away_team: usize, params: &ZdtsParameterVector) -> Result<SkellamParams> {
    let (eta1, eta2) = zdts_log_rates(home_team, away_team, params)?;
    SkellamParams::from_log(eta1, eta2)
}

pub fn zdts_pointwise_log_lik(dataset: &Dataset, params: &ZdtsParameterVector) -> Result<Vec<f64>> {
    dataset
        .matches
        .iter()
        .map(|m| {
            let rates = zdts_rates(m.home, m.away, params)?;
            Ok(zdts_log_pmf(rates)?[m.set_diff.index()])
        })
        .collect()
}

pub fn zdts_log_lik(dataset: &Dataset, params: &ZdtsParameterVector) -> Result<f64> {
    Ok(zdts_pointwise_log_lik(dataset, params)?.iter().sum())
}

/// Normal log-densities: `mu`, `home` with their own SDs, every free team
/// effect with `ability_sd`.
pub fn zdts_log_prior(params: &ZdtsParameterVector, prior: &ZdtsPrior) -> f64 {
    normal_log_density(params.mu, prior.mu_sd)
        + normal_log_density(params.home, prior.home_sd)
        + params
            .free_effects()
            .map(|v| normal_log_density(v, prior.ability_sd))
            .sum::<f64>()
}
