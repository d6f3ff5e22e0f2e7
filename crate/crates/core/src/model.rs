//! Uniform interface over the two likelihoods, in the unconstrained
//! parameter space the sampler works in.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Team};
use crate::distributions::zdts_log_pmf;
use crate::error::{Error, Result};
use crate::ordered_model::{
    category_probs_from_gap, cutpoint_log_jacobian, ordered_log_prior, ordered_pointwise_log_lik,
    OrderedParameterVector, N_CUTPOINTS,
};
use crate::zdts_model::{
    zdts_log_prior, zdts_pointwise_log_lik, zdts_rates, Abilities, ModelVariant, ZdtsParameterVector,
    ZdtsPrior,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelSpec {
    Ordered {
        n_teams: usize,
    },
    Zdts {
        n_teams: usize,
        variant: ModelVariant,
        #[serde(default)]
        prior: ZdtsPrior,
    },
}

/// A decoded parameter draw.
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Ordered(OrderedParameterVector),
    Zdts(ZdtsParameterVector),
}

impl Params {
    /// Outcome probabilities over `SetDiff::ALL` for a home/away pairing.
    pub fn outcome_probs(&self, home: usize, away: usize) -> Result<[f64; 6]> {
        match self {
            Params::Ordered(p) => {
                let n = p.abilities.len();
                if home >= n || away >= n {
                    return Err(Error::UnknownTeam(format!("index {}", home.max(away))));
                }
                Ok(category_probs_from_gap(&p.cutpoints, p.abilities[home] - p.abilities[away]).0)
            }
            Params::Zdts(p) => Ok(zdts_log_pmf(zdts_rates(home, away, p)?)?.map(f64::exp)),
        }
    }
}

impl ModelSpec {
    pub fn ordered(n_teams: usize) -> Self {
        ModelSpec::Ordered { n_teams }
    }

    pub fn zdts(n_teams: usize, variant: ModelVariant) -> Self {
        ModelSpec::Zdts {
            n_teams,
            variant,
            prior: ZdtsPrior::default(),
        }
    }

    pub fn n_teams(&self) -> usize {
        match self {
            ModelSpec::Ordered { n_teams } | ModelSpec::Zdts { n_teams, .. } => *n_teams,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ModelSpec::Ordered { .. } => "ordered".into(),
            ModelSpec::Zdts { variant, .. } => format!("zdts-{}", variant.number()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ModelSpec::Ordered { n_teams } => OrderedParameterVector::dim(*n_teams),
            ModelSpec::Zdts { n_teams, variant, .. } => ZdtsParameterVector::dim(*n_teams, *variant),
        }
    }

    pub fn decode(&self, theta: &[f64]) -> Result<Params> {
        match self {
            ModelSpec::Ordered { n_teams } => {
                Ok(Params::Ordered(OrderedParameterVector::from_unconstrained(theta, *n_teams)?))
            }
            ModelSpec::Zdts { n_teams, variant, .. } => Ok(Params::Zdts(
                ZdtsParameterVector::from_unconstrained(theta, *n_teams, *variant)?,
            )),
        }
    }

    /// Names of the unconstrained coordinates.
    pub fn param_names(&self, teams: &[Team]) -> Vec<String> {
        let free = || teams.iter().skip(1).map(|t| t.name.clone());
        match self {
            ModelSpec::Ordered { .. } => {
                let mut v = vec!["c1".to_string()];
                v.extend((2..=N_CUTPOINTS).map(|k| format!("log_dc{k}")));
                v.extend(free().map(|n| format!("ability[{n}]")));
                v
            }
            ModelSpec::Zdts { variant, .. } => {
                let mut v = vec!["mu".to_string(), "home".to_string()];
                if *variant == ModelVariant::AttackDefense {
                    v.extend(free().map(|n| format!("att[{n}]")));
                    v.extend(free().map(|n| format!("def[{n}]")));
                } else {
                    v.extend(free().map(|n| format!("ability[{n}]")));
                }
                v
            }
        }
    }

    /// Names of the interpretable parameters: ordered cutpoints and the full
    /// sum-to-zero effect vectors.
    pub fn constrained_names(&self, teams: &[Team]) -> Vec<String> {
        let all = |prefix: &str| teams.iter().map(move |t| format!("{prefix}[{}]", t.name)).collect::<Vec<_>>();
        match self {
            ModelSpec::Ordered { .. } => {
                let mut v: Vec<String> = (1..=N_CUTPOINTS).map(|k| format!("c{k}")).collect();
                v.extend(all("ability"));
                v
            }
            ModelSpec::Zdts { variant, .. } => {
                let mut v = vec!["mu".to_string(), "home".to_string()];
                if *variant == ModelVariant::AttackDefense {
                    v.extend(all("att"));
                    v.extend(all("def"));
                } else {
                    v.extend(all("ability"));
                }
                v
            }
        }
    }

    pub fn constrained(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(match self.decode(theta)? {
            Params::Ordered(p) => p.cutpoints.iter().chain(&p.abilities).copied().collect(),
            Params::Zdts(p) => {
                let mut v = vec![p.mu, p.home];
                match p.abilities {
                    Abilities::AttackDefense { attack, defense } => {
                        v.extend(attack);
                        v.extend(defense);
                    }
                    Abilities::Single(a) => v.extend(a),
                }
                v
            }
        })
    }

    pub fn pointwise_log_lik(&self, dataset: &Dataset, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_teams(dataset)?;
        match self.decode(theta)? {
            Params::Ordered(p) => ordered_pointwise_log_lik(dataset, &p),
            Params::Zdts(p) => zdts_pointwise_log_lik(dataset, &p),
        }
    }

    pub fn log_lik(&self, dataset: &Dataset, theta: &[f64]) -> Result<f64> {
        Ok(self.pointwise_log_lik(dataset, theta)?.iter().sum())
    }

    /// Log prior of the constrained parameters plus the log-Jacobian of the
    /// unconstrained map (cutpoint increments only; the ZDTS map is the
    /// identity on its free coordinates).
    pub fn log_prior(&self, theta: &[f64]) -> Result<f64> {
        match (self, self.decode(theta)?) {
            (ModelSpec::Ordered { .. }, Params::Ordered(p)) => {
                Ok(ordered_log_prior(&p) + cutpoint_log_jacobian(theta))
            }
            (ModelSpec::Zdts { prior, .. }, Params::Zdts(p)) => Ok(zdts_log_prior(&p, prior)),
            _ => unreachable!("decode returns the spec's own parameter type"),
        }
    }

    /// `-2 log L`.
    pub fn deviance(&self, dataset: &Dataset, theta: &[f64]) -> Result<f64> {
        Ok(-2.0 * self.log_lik(dataset, theta)?)
    }

    /// Unnormalised log posterior. Parameter values outside the numerically
    /// valid region (rate overflow, collapsed cutpoints, degenerate pmf) give
    /// `-inf`; NaN anywhere is an error.
    pub fn log_posterior(&self, dataset: &Dataset, theta: &[f64]) -> Result<f64> {
        if theta.iter().any(|v| v.is_nan()) {
            return Err(Error::NanDensity(theta.to_vec()));
        }
        let eval = || -> Result<f64> { Ok(self.log_prior(theta)? + self.log_lik(dataset, theta)?) };
        match eval() {
            Ok(v) if v.is_nan() => Err(Error::NanDensity(theta.to_vec())),
            Ok(v) => Ok(v),
            Err(Error::RateOverflow(_))
            | Err(Error::UnorderedCutpoints(_))
            | Err(Error::DegeneratePmf { .. })
            | Err(Error::InvalidRates { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    fn check_teams(&self, dataset: &Dataset) -> Result<()> {
        if dataset.n_teams() != self.n_teams() {
            return Err(Error::InvalidArgument(format!(
                "model has {} teams, dataset has {}",
                self.n_teams(),
                dataset.n_teams()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{MatchRecord, SetDiff};
    use crate::ordered_model::{ordered_log_lik, ordered_log_prior};
    use crate::zdts_model::{zdts_log_lik, zdts_log_prior};
    use approx::assert_abs_diff_eq;

    fn five_match_dataset() -> Dataset {
        let m = |home, away, d| MatchRecord { home, away, set_diff: SetDiff::new(d).unwrap() };
        Dataset::new(
            vec!["A".into(), "B".into(), "C".into()],
            vec![m(0, 1, 3), m(1, 2, -1), m(2, 0, 2), m(1, 0, -3), m(0, 2, 1)],
        )
        .unwrap()
    }

    #[test]
    fn empty_dataset_posterior_is_prior() {
        let ds = five_match_dataset().with_matches(vec![]);
        for spec in [ModelSpec::ordered(3), ModelSpec::zdts(3, ModelVariant::AttackDefense)] {
            let theta: Vec<f64> = (0..spec.dim()).map(|i| 0.1 * i as f64 - 0.2).collect();
            assert_abs_diff_eq!(
                spec.log_posterior(&ds, &theta).unwrap(),
                spec.log_prior(&theta).unwrap(),
                epsilon = 1e-14
            );
            assert_eq!(spec.deviance(&ds, &theta).unwrap(), 0.0);
        }
    }

    #[test]
    fn naive_recomputation_matches() {
        let ds = five_match_dataset();

        // ordered: rebuild every piece by hand
        let spec = ModelSpec::ordered(3);
        let theta: [f64; 7] = [-1.5, -0.3, 0.1, -0.2, 0.4, 0.6, -0.25];
        let mut cut = [theta[0]; 5];
        for k in 1..5 {
            cut[k] = cut[k - 1] + theta[k].exp();
        }
        let abil = [-(0.6 - 0.25), 0.6, -0.25];
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut ll = 0.0;
        for m in &ds.matches {
            let gap = abil[m.home] - abil[m.away];
            let k = m.set_diff.category();
            let upper = if k == 6 { 1.0 } else { s(cut[k - 1] - gap) };
            let lower = if k == 1 { 0.0 } else { s(cut[k - 2] - gap) };
            ll += (upper - lower).ln();
        }
        let lp_norm = |x: f64, sd: f64| -0.5 * (x / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let prior: f64 = cut.iter().chain(&abil[1..]).map(|&v| lp_norm(v, 100.0)).sum();
        let jac: f64 = theta[1..5].iter().sum();
        assert_abs_diff_eq!(spec.log_posterior(&ds, &theta).unwrap(), ll + prior + jac, epsilon = 1e-11);
        let p = OrderedParameterVector::from_unconstrained(&theta, 3).unwrap();
        assert_abs_diff_eq!(ordered_log_lik(&ds, &p).unwrap(), ll, epsilon = 1e-12);
        assert_abs_diff_eq!(ordered_log_prior(&p), prior, epsilon = 1e-12);

        let spec = ModelSpec::zdts(3, ModelVariant::AttackDefense);
        let theta = [0.8, 0.3, 0.2, -0.4, 0.1, 0.5];
        let p = ZdtsParameterVector::from_unconstrained(&theta, 3, ModelVariant::AttackDefense).unwrap();
        let expected = zdts_log_lik(&ds, &p).unwrap() + zdts_log_prior(&p, &ZdtsPrior::default());
        assert_abs_diff_eq!(spec.log_posterior(&ds, &theta).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn better_fitting_match_raises_posterior() {
        let base = five_match_dataset();
        let spec = ModelSpec::zdts(3, ModelVariant::AttackDefense);
        // strong home advantage
        let theta = [0.5, 1.5, 0.0, 0.0, 0.0, 0.0];
        let with = |d| {
            let mut m = base.matches.clone();
            m.push(MatchRecord { home: 0, away: 1, set_diff: SetDiff::new(d).unwrap() });
            spec.log_posterior(&base.with_matches(m), &theta).unwrap()
        };
        assert!(with(3) > with(-3));
    }

    #[test]
    fn out_of_range_is_neg_inf_and_nan_is_error() {
        let ds = five_match_dataset();
        let spec = ModelSpec::zdts(3, ModelVariant::AttackDefense);
        let theta = [40.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(spec.log_posterior(&ds, &theta).unwrap(), f64::NEG_INFINITY);
        let theta = [f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(matches!(spec.log_posterior(&ds, &theta), Err(Error::NanDensity(_))));
        assert!(spec.log_posterior(&ds, &[0.0; 3]).is_err());
    }

    #[test]
    fn perfect_certainty_has_zero_deviance() {
        let m = MatchRecord { home: 0, away: 1, set_diff: SetDiff::new(3).unwrap() };
        let ds = Dataset::new(vec!["A".into(), "B".into()], vec![m]).unwrap();
        let spec = ModelSpec::ordered(2);
        // every cutpoint far below the gap: all mass on +3
        let theta = [-80.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(spec.deviance(&ds, &theta).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn names_match_dimensions() {
        let teams: Vec<Team> = (0..4).map(|i| Team { index: i, name: format!("T{i}") }).collect();
        for spec in [
            ModelSpec::ordered(4),
            ModelSpec::zdts(4, ModelVariant::AttackDefense),
            ModelSpec::zdts(4, ModelVariant::HomeDifference),
        ] {
            assert_eq!(spec.param_names(&teams).len(), spec.dim());
            let theta = vec![0.1; spec.dim()];
            assert_eq!(spec.constrained_names(&teams).len(), spec.constrained(&theta).unwrap().len());
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = ModelSpec::zdts(12, ModelVariant::HomeDifference);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"variant\":3"));
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
    }
}
