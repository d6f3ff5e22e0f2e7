//! Posterior-predictive simulation: match outcomes, league regeneration,
//! MAD measures, mid-season splits and best-of play-off series.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{observed_table, table_from_outcomes, Dataset, LeagueTable, MatchRecord, SetDiff};
use crate::distributions::sample_outcome;
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::sampler::ChainSet;

/// Anything that yields per-draw outcome probabilities for home/away
/// pairings.
pub trait OutcomeSource: Sync {
    fn n_draws(&self) -> usize;
    fn n_teams(&self) -> usize;
    /// Probabilities over `SetDiff::ALL` for each pairing under draw `t`.
    fn outcome_probs(&self, t: usize, pairs: &[(usize, usize)]) -> Result<Vec<[f64; 6]>>;
}

/// Kept posterior draws of a fitted model.
pub struct PosteriorSource<'a> {
    spec: &'a ModelSpec,
    chains: &'a ChainSet,
}

impl<'a> PosteriorSource<'a> {
    pub fn new(spec: &'a ModelSpec, chains: &'a ChainSet) -> Result<Self> {
        if chains.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                got: chains.dim(),
            });
        }
        if chains.total_draws() == 0 {
            return Err(Error::InvalidArgument("no posterior draws".into()));
        }
        Ok(PosteriorSource { spec, chains })
    }
}

impl OutcomeSource for PosteriorSource<'_> {
    fn n_draws(&self) -> usize {
        self.chains.total_draws()
    }

    fn n_teams(&self) -> usize {
        self.spec.n_teams()
    }

    fn outcome_probs(&self, t: usize, pairs: &[(usize, usize)]) -> Result<Vec<[f64; 6]>> {
        let params = self.spec.decode(self.chains.flat_draw(t))?;
        pairs.iter().map(|&(h, a)| params.outcome_probs(h, a)).collect()
    }
}

/// Wraps a closure `(draw, home, away) -> probabilities`; handy for
/// oracle and stub predictors.
pub struct FnSource<F> {
    pub n_draws: usize,
    pub n_teams: usize,
    pub f: F,
}

impl<F> OutcomeSource for FnSource<F>
where
    F: Fn(usize, usize, usize) -> [f64; 6] + Sync,
{
    fn n_draws(&self) -> usize {
        self.n_draws
    }

    fn n_teams(&self) -> usize {
        self.n_teams
    }

    fn outcome_probs(&self, t: usize, pairs: &[(usize, usize)]) -> Result<Vec<[f64; 6]>> {
        Ok(pairs.iter().map(|&(h, a)| (self.f)(t, h, a)).collect())
    }
}

/// Random stream for iteration `t`.
fn iteration_rng(seed: u64, t: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    rng
}

fn check_schedule(n_teams: usize, schedule: &[(usize, usize)]) -> Result<()> {
    for &(h, a) in schedule {
        if h >= n_teams || a >= n_teams {
            return Err(Error::UnknownTeam(format!("index {}", h.max(a))));
        }
    }
    Ok(())
}

/// Predicted outcomes, one row per posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub n_teams: usize,
    pub schedule: Vec<(usize, usize)>,
    pub draws: Vec<Vec<SetDiff>>,
}

impl PredictiveDraws {
    pub fn n_iterations(&self) -> usize {
        self.draws.len()
    }

    pub fn tables(&self) -> Result<Vec<LeagueTable>> {
        self.draws
            .iter()
            .map(|d| table_from_outcomes(self.n_teams, &self.schedule, d))
            .collect()
    }
}

/// One predicted outcome per draw and scheduled match; a single parameter
/// draw generates the whole schedule of its iteration.
pub fn predict_matches<S: OutcomeSource + ?Sized>(
    source: &S,
    schedule: &[(usize, usize)],
    seed: u64,
) -> Result<PredictiveDraws> {
    check_schedule(source.n_teams(), schedule)?;
    let draws = (0..source.n_draws())
        .into_par_iter()
        .map(|t| {
            let mut rng = iteration_rng(seed, t);
            let probs = source.outcome_probs(t, schedule)?;
            Ok(probs.iter().map(|p| sample_outcome(p, &mut rng)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictiveDraws {
        n_teams: source.n_teams(),
        schedule: schedule.to_vec(),
        draws,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamRegeneration {
    pub team: usize,
    pub observed_points: i64,
    pub mean_points: f64,
    pub sd_points: f64,
    pub observed_set_diff: i64,
    pub mean_set_diff: f64,
    pub observed_rank: usize,
    pub mean_rank: f64,
    /// Position when teams are ordered by mean points.
    pub predicted_rank: usize,
    /// `rank_freq[r]` is the share of iterations finishing at rank `r + 1`.
    pub rank_freq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegeneratedLeague {
    pub tables: Vec<LeagueTable>,
    pub teams: Vec<TeamRegeneration>,
}

impl RegeneratedLeague {
    /// CSV in predicted-rank order.
    pub fn write_csv<W: Write>(&self, w: W, names: &[String]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "team",
            "observed_points",
            "expected_points",
            "sd_points",
            "observed_set_diff",
            "expected_set_diff",
            "observed_rank",
            "expected_rank",
            "predicted_rank",
        ])?;
        let mut order: Vec<&TeamRegeneration> = self.teams.iter().collect();
        order.sort_by_key(|t| t.predicted_rank);
        for t in order {
            wtr.write_record([
                names[t.team].clone(),
                t.observed_points.to_string(),
                format!("{:.2}", t.mean_points),
                format!("{:.2}", t.sd_points),
                t.observed_set_diff.to_string(),
                format!("{:.2}", t.mean_set_diff),
                t.observed_rank.to_string(),
                format!("{:.2}", t.mean_rank),
                t.predicted_rank.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn mean_sd(x: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        x.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Summarises per-iteration tables against the observed one.
pub fn summarize_tables(tables: Vec<LeagueTable>, observed: &LeagueTable) -> RegeneratedLeague {
    let p = observed.rows.len();
    let iters = tables.len() as f64;
    let mut teams: Vec<TeamRegeneration> = (0..p)
        .map(|j| {
            let (mean_points, sd_points) = mean_sd(tables.iter().map(move |t| t.rows[j].points as f64));
            let (mean_set_diff, _) = mean_sd(tables.iter().map(move |t| t.rows[j].total_set_diff as f64));
            let (mean_rank, _) = mean_sd(tables.iter().map(move |t| t.rows[j].rank as f64));
            let mut rank_freq = vec![0.0; p];
            for t in &tables {
                rank_freq[t.rows[j].rank - 1] += 1.0 / iters;
            }
            TeamRegeneration {
                team: j,
                observed_points: observed.rows[j].points,
                mean_points,
                sd_points,
                observed_set_diff: observed.rows[j].total_set_diff,
                mean_set_diff,
                observed_rank: observed.rows[j].rank,
                mean_rank,
                predicted_rank: 0,
                rank_freq,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        teams[b]
            .mean_points
            .total_cmp(&teams[a].mean_points)
            .then(teams[b].mean_set_diff.total_cmp(&teams[a].mean_set_diff))
            .then(a.cmp(&b))
    });
    for (pos, j) in order.into_iter().enumerate() {
        teams[j].predicted_rank = pos + 1;
    }
    RegeneratedLeague { tables, teams }
}

/// Re-plays the observed schedule under every posterior draw.
pub fn regenerate_league<S: OutcomeSource + ?Sized>(
    source: &S,
    dataset: &Dataset,
    seed: u64,
) -> Result<RegeneratedLeague> {
    if dataset.n_matches() == 0 {
        return Err(Error::EmptyDataset);
    }
    let pred = predict_matches(source, &dataset.schedule(), seed)?;
    Ok(summarize_tables(pred.tables()?, &observed_table(dataset)))
}

pub const MAD_MEASURES: [&str; 5] = ["Q1", "Q2", "Q3", "Q4", "Q5"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadStat {
    pub measure: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadSummary {
    pub measures: Vec<MadStat>,
}

impl MadSummary {
    pub fn get(&self, measure: &str) -> Option<&MadStat> {
        self.measures.iter().find(|m| m.measure == measure)
    }

    /// CSV `measure,mean,sd`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["measure", "mean", "sd"])?;
        for m in &self.measures {
            wtr.write_record([m.measure.clone(), m.mean.to_string(), m.sd.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn mad(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| (p - o).abs()).sum::<f64>() / pred.len() as f64
}

fn outcome_counts(diffs: &[SetDiff]) -> Vec<f64> {
    let mut c = vec![0.0; 6];
    for d in diffs {
        c[d.index()] += 1.0;
    }
    c
}

/// The five MADs for one iteration: outcome counts, outcome percentages,
/// per-match differences, per-team points and per-team set-differences.
pub fn mad_values(
    n_teams: usize,
    schedule: &[(usize, usize)],
    predicted: &[SetDiff],
    observed: &[SetDiff],
) -> Result<[f64; 5]> {
    if predicted.len() != observed.len() {
        return Err(Error::LengthMismatch {
            expected: observed.len(),
            got: predicted.len(),
        });
    }
    if observed.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = observed.len() as f64;
    let (cp, co) = (outcome_counts(predicted), outcome_counts(observed));
    let pct = |c: &[f64]| c.iter().map(|v| 100.0 * v / n).collect::<Vec<_>>();
    let as_f = |d: &[SetDiff]| d.iter().map(|v| v.get() as f64).collect::<Vec<_>>();
    let tp = table_from_outcomes(n_teams, schedule, predicted)?;
    let to = table_from_outcomes(n_teams, schedule, observed)?;
    let f = |v: Vec<i64>| v.into_iter().map(|x| x as f64).collect::<Vec<_>>();
    Ok([
        mad(&cp, &co),
        mad(&pct(&cp), &pct(&co)),
        mad(&as_f(predicted), &as_f(observed)),
        mad(&f(tp.points()), &f(to.points())),
        mad(&f(tp.set_diffs()), &f(to.set_diffs())),
    ])
}

/// Posterior mean and SD of the five MAD measures.
pub fn mad_measures(pred: &PredictiveDraws, dataset: &Dataset) -> Result<MadSummary> {
    if pred.schedule != dataset.schedule() {
        return Err(Error::InvalidArgument("predictions do not follow the dataset schedule".into()));
    }
    let observed = dataset.observed_diffs();
    let per_iter = pred
        .draws
        .par_iter()
        .map(|d| mad_values(pred.n_teams, &pred.schedule, d, &observed))
        .collect::<Result<Vec<_>>>()?;
    let measures = MAD_MEASURES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let (mean, sd) = mean_sd(per_iter.iter().map(move |v| v[k]));
            MadStat {
                measure: name.to_string(),
                mean,
                sd,
            }
        })
        .collect();
    Ok(MadSummary { measures })
}

/// First half of the matches (file order) for training, the rest for
/// testing. An odd count puts the extra match in the test half.
pub fn midseason_split(dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    split_at_fraction(dataset, 0.5)
}

/// Splits after `floor(frac * n)` matches.
pub fn split_at_fraction(dataset: &Dataset, frac: f64) -> Result<(Dataset, Dataset)> {
    let n = dataset.n_matches();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction must be in (0, 1), got {frac}")));
    }
    let exact = frac * n as f64;
    let cut = exact.floor() as usize;
    if exact.fract() != 0.0 {
        log::warn!("{n} matches do not split evenly; training on the first {cut}");
    }
    let (train, test) = dataset.matches.split_at(cut);
    Ok((dataset.with_matches(train.to_vec()), dataset.with_matches(test.to_vec())))
}

/// Who plays at home in each match of a series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HostingRule {
    /// Higher seed hosts matches 1, 2 and 5 of a best-of-5 and matches 1
    /// and 3 of a best-of-3.
    Standard,
    /// `true` where the higher seed hosts match `k`; must cover
    /// `2 * n_req - 1` matches.
    Custom(Vec<bool>),
}

impl HostingRule {
    pub fn higher_seed_hosts(&self, k: usize, n_req: u32) -> bool {
        match self {
            HostingRule::Standard => match n_req {
                2 => k != 1,
                _ => matches!(k, 0 | 1 | 4),
            },
            HostingRule::Custom(v) => v[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayoffRound {
    /// `(higher seed, lower seed)`.
    pub pairs: Vec<(usize, usize)>,
    pub n_req: u32,
    pub hosting: HostingRule,
}

impl PlayoffRound {
    pub fn new(pairs: Vec<(usize, usize)>, n_req: u32, hosting: HostingRule) -> Result<Self> {
        if !(n_req == 2 || n_req == 3) {
            return Err(Error::InvalidNReq(n_req));
        }
        if let HostingRule::Custom(v) = &hosting {
            if v.len() < (2 * n_req - 1) as usize {
                return Err(Error::InvalidArgument(format!(
                    "hosting pattern has {} entries, need {}",
                    v.len(),
                    2 * n_req - 1
                )));
            }
        }
        Ok(PlayoffRound { pairs, n_req, hosting })
    }

    fn max_matches(&self) -> usize {
        (2 * self.n_req - 1) as usize
    }
}

/// Series simulation mode. Both consume the random stream identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesMode {
    /// Stop once either team reaches `n_req` wins.
    EarlyStop,
    /// Always play `2 n_req - 1` matches and count wins.
    FixedLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQualification {
    pub higher: usize,
    pub lower: usize,
    pub p_higher: f64,
    pub p_lower: f64,
    /// Mean series length (early-stop count).
    pub mean_matches: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayoffResult {
    pub pairs: Vec<PairQualification>,
    pub n_iterations: usize,
}

impl PlayoffResult {
    /// CSV `team,opponent,seed,qualification_probability`, two rows per pair.
    pub fn write_csv<W: Write>(&self, w: W, names: &[String]) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["team", "opponent", "seed", "qualification_probability"])?;
        for p in &self.pairs {
            wtr.write_record([
                names[p.higher].as_str(),
                names[p.lower].as_str(),
                "higher",
                &p.p_higher.to_string(),
            ])?;
            wtr.write_record([
                names[p.lower].as_str(),
                names[p.higher].as_str(),
                "lower",
                &p.p_lower.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Plays one series; returns (higher seed qualified, matches played before
/// the winner was decided).
fn play_series(
    round: &PlayoffRound,
    probs_hi_home: &[f64; 6],
    probs_lo_home: &[f64; 6],
    mode: SeriesMode,
    rng: &mut ChaCha8Rng,
) -> (bool, usize) {
    let (mut w1, mut w2) = (0u32, 0u32);
    let mut decided_at = None;
    for k in 0..round.max_matches() {
        if mode == SeriesMode::EarlyStop && decided_at.is_some() {
            break;
        }
        let y = if round.hosting.higher_seed_hosts(k, round.n_req) {
            sample_outcome(probs_hi_home, rng)
        } else {
            sample_outcome(probs_lo_home, rng).negate()
        };
        if y.home_wins() {
            w1 += 1;
        } else {
            w2 += 1;
        }
        if decided_at.is_none() && (w1 == round.n_req || w2 == round.n_req) {
            decided_at = Some(k + 1);
        }
    }
    let played = decided_at.expect("a best-of series always produces a winner");
    (w1 > w2, played)
}

/// Qualification probabilities for each pair of a round, one series per
/// posterior draw.
pub fn simulate_playoffs<S: OutcomeSource + ?Sized>(
    source: &S,
    round: &PlayoffRound,
    seed: u64,
    mode: SeriesMode,
) -> Result<PlayoffResult> {
    if !(round.n_req == 2 || round.n_req == 3) {
        return Err(Error::InvalidNReq(round.n_req));
    }
    let venues: Vec<(usize, usize)> = round.pairs.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    check_schedule(source.n_teams(), &venues)?;
    let n = source.n_draws();
    let per_iter = (0..n)
        .into_par_iter()
        .map(|t| {
            let probs = source.outcome_probs(t, &venues)?;
            Ok(probs
                .chunks_exact(2)
                .enumerate()
                .map(|(i, p)| {
                    // Each pair reads its own window of the iteration stream.
                    let mut rng = iteration_rng(seed, t);
                    rng.set_word_pos((i as u128) << 32);
                    play_series(round, &p[0], &p[1], mode, &mut rng)
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs = round
        .pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let wins = per_iter.iter().filter(|r| r[i].0).count() as f64;
            let len = per_iter.iter().map(|r| r[i].1 as f64).sum::<f64>();
            let p = wins / n as f64;
            PairQualification {
                higher: a,
                lower: b,
                p_higher: p,
                p_lower: 1.0 - p,
                mean_matches: len / n as f64,
            }
        })
        .collect();
    Ok(PlayoffResult { pairs, n_iterations: n })
}

/// An observed play-off match tagged with its round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayoffMatch {
    pub round: String,
    pub record: MatchRecord,
}

/// Q3 MAD per round (in first-appearance order) for observed play-off
/// matches, predicting each with its actual host.
pub fn playoff_mad<S: OutcomeSource + ?Sized>(
    source: &S,
    observed: &[PlayoffMatch],
    seed: u64,
) -> Result<Vec<(String, MadStat)>> {
    let mut rounds: Vec<String> = Vec::new();
    for m in observed {
        if !rounds.contains(&m.round) {
            rounds.push(m.round.clone());
        }
    }
    if rounds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let schedule: Vec<(usize, usize)> = observed.iter().map(|m| (m.record.home, m.record.away)).collect();
    let pred = predict_matches(source, &schedule, seed)?;
    rounds
        .into_iter()
        .map(|round| {
            let idx: Vec<usize> = (0..observed.len()).filter(|&i| observed[i].round == round).collect();
            let obs: Vec<f64> = idx.iter().map(|&i| observed[i].record.set_diff.get() as f64).collect();
            let per_iter = pred.draws.iter().map(|d| {
                let p: Vec<f64> = idx.iter().map(|&i| d[i].get() as f64).collect();
                mad(&p, &obs)
            });
            let (mean, sd) = mean_sd(per_iter);
            Ok((
                round,
                MadStat {
                    measure: "Q3".into(),
                    mean,
                    sd,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::double_round_robin;
    use crate::distributions::{zdts_pmf, SkellamParams};
    use crate::sampler::Chain;
    use proptest::prelude::*;

    fn one_hot(d: i64) -> [f64; 6] {
        let mut p = [0.0; 6];
        p[SetDiff::new(d).unwrap().index()] = 1.0;
        p
    }

    fn dataset(n_teams: usize, diffs: &[i64]) -> Dataset {
        let sched = double_round_robin(n_teams);
        let matches = sched
            .iter()
            .zip(diffs.iter().cycle())
            .map(|(&(home, away), &d)| MatchRecord {
                home,
                away,
                set_diff: SetDiff::new(d).unwrap(),
            })
            .collect();
        Dataset::new((0..n_teams).map(|i| format!("T{i}")).collect(), matches).unwrap()
    }

    /// Always predicts the observed outcome of the scheduled match.
    fn oracle(ds: &Dataset, n_draws: usize) -> FnSource<impl Fn(usize, usize, usize) -> [f64; 6] + Sync + '_> {
        FnSource {
            n_draws,
            n_teams: ds.n_teams(),
            f: move |_, h, a| {
                let m = ds.matches.iter().find(|m| m.home == h && m.away == a).unwrap();
                one_hot(m.set_diff.get())
            },
        }
    }

    fn uniform(n_draws: usize, n_teams: usize) -> FnSource<impl Fn(usize, usize, usize) -> [f64; 6] + Sync> {
        FnSource {
            n_draws,
            n_teams,
            f: |_, _, _| [1.0 / 6.0; 6],
        }
    }

    #[test]
    fn degenerate_draw_predicts_three() {
        let src = FnSource {
            n_draws: 10,
            n_teams: 4,
            f: |_, _, _| one_hot(3),
        };
        let pred = predict_matches(&src, &double_round_robin(4), 1).unwrap();
        assert!(pred.draws.iter().flatten().all(|d| d.get() == 3));
    }

    #[test]
    fn unknown_team_in_schedule() {
        assert!(predict_matches(&uniform(5, 3), &[(0, 3)], 1).is_err());
    }

    #[test]
    fn posterior_source_frequencies_match_pmf() {
        // Two-team ZDTS variant 2 with mu = 1.0, home = 0.3, abilities zero.
        let spec = ModelSpec::zdts(2, crate::zdts_model::ModelVariant::Ability);
        let theta = vec![1.0, 0.3, 0.0];
        let n = 18000;
        let chain = Chain {
            draws: theta.iter().cycle().take(3 * n).copied().collect(),
            iterations: (1..=n).collect(),
            log_post: vec![0.0; n],
            stats: None,
        };
        let set = ChainSet::new(vec!["mu".into(), "home".into(), "a".into()], vec![chain]).unwrap();
        let src = PosteriorSource::new(&spec, &set).unwrap();
        let pred = predict_matches(&src, &[(0, 1)], 3).unwrap();
        let pmf = zdts_pmf(SkellamParams::from_log(1.3, 1.0).unwrap()).unwrap();
        let counts = outcome_counts(&pred.draws.iter().map(|d| d[0]).collect::<Vec<_>>());
        for (c, p) in counts.iter().zip(pmf.probabilities) {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c / n as f64 - p).abs() < 4.0 * se, "{c} {p}");
        }
    }

    #[test]
    fn posterior_source_checks_dimension() {
        let spec = ModelSpec::ordered(4);
        let set = ChainSet::from_scalar_chains(vec![vec![0.0; 3]]).unwrap();
        assert!(PosteriorSource::new(&spec, &set).is_err());
    }

    #[test]
    fn identical_chains_give_exchangeable_predictions() {
        // Chi-square homogeneity between the two halves of a uniform source.
        let pred = predict_matches(&uniform(6000, 2), &[(0, 1)], 9).unwrap();
        let (a, b) = pred.draws.split_at(3000);
        let ca = outcome_counts(&a.iter().map(|d| d[0]).collect::<Vec<_>>());
        let cb = outcome_counts(&b.iter().map(|d| d[0]).collect::<Vec<_>>());
        let chi2: f64 = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| {
                let e = (x + y) / 2.0;
                (x - e).powi(2) / e + (y - e).powi(2) / e
            })
            .sum();
        // 99th percentile of chi-square with 5 degrees of freedom.
        assert!(chi2 < 15.086, "{chi2}");
    }

    #[test]
    fn feed_through_reproduces_observed_table() {
        let ds = dataset(6, &[3, -1, 2, -3, 1, -2, 3]);
        let regen = regenerate_league(&oracle(&ds, 20), &ds, 5).unwrap();
        let obs = observed_table(&ds);
        assert!(regen.tables.iter().all(|t| *t == obs));
        for t in &regen.teams {
            assert_eq!(t.mean_points, t.observed_points as f64);
            assert_eq!(t.predicted_rank, t.observed_rank);
        }
    }

    #[test]
    fn symmetric_two_team_league() {
        let ds = dataset(2, &[3, -3]);
        let src = FnSource {
            n_draws: 20000,
            n_teams: 2,
            f: |_, _, _| [0.1, 0.15, 0.25, 0.25, 0.15, 0.1],
        };
        let regen = regenerate_league(&src, &ds, 11).unwrap();
        let (a, b) = (regen.teams[0].mean_points, regen.teams[1].mean_points);
        let se = regen.teams[0].sd_points / (20000f64).sqrt();
        assert!((a - b).abs() < 4.0 * se * 2f64.sqrt(), "{a} {b}");
    }

    proptest! {
        #[test]
        fn regenerated_leagues_conserve(seed in 0u64..1000, n_teams in 2usize..7) {
            let ds = dataset(n_teams, &[1]);
            let regen = regenerate_league(&uniform(30, n_teams), &ds, seed).unwrap();
            let n = ds.n_matches() as i64;
            for t in &regen.tables {
                prop_assert_eq!(t.points().iter().sum::<i64>(), 3 * n);
                prop_assert_eq!(t.set_diffs().iter().sum::<i64>(), 0);
            }
        }
    }

    #[test]
    fn mad_perfect_prediction_is_zero() {
        let ds = dataset(4, &[3, -2, 1]);
        let pred = predict_matches(&oracle(&ds, 15), &ds.schedule(), 1).unwrap();
        let m = mad_measures(&pred, &ds).unwrap();
        assert!(m.measures.iter().all(|s| s.mean == 0.0 && s.sd == 0.0));
    }

    #[test]
    fn mad_single_match() {
        let v = mad_values(2, &[(0, 1)], &[SetDiff::new(3).unwrap()], &[SetDiff::new(-3).unwrap()]).unwrap();
        assert_eq!(v[2], 6.0);
        // Counts differ by one in two cells out of six.
        assert!((v[0] - 2.0 / 6.0).abs() < 1e-12);
        assert!((v[1] - 200.0 / 6.0).abs() < 1e-12);
        // Points 3-0 vs 0-3, set-differences +3/-3 vs -3/+3.
        assert_eq!(v[3], 3.0);
        assert_eq!(v[4], 6.0);
    }

    #[test]
    fn mad_misaligned_schedule_errors() {
        let ds = dataset(3, &[1]);
        let pred = predict_matches(&uniform(3, 3), &ds.schedule()[1..], 1).unwrap();
        assert!(mad_measures(&pred, &ds).is_err());
    }

    #[test]
    fn split_sizes() {
        let ds = dataset(2, &[1, -1]);
        let (tr, te) = midseason_split(&ds).unwrap();
        assert_eq!((tr.n_matches(), te.n_matches()), (1, 1));
        let three = ds.with_matches([ds.matches.clone(), vec![ds.matches[0]]].concat());
        let (tr, te) = midseason_split(&three).unwrap();
        assert_eq!((tr.n_matches(), te.n_matches()), (1, 2));
        let big = ds.with_matches(ds.matches.iter().cycle().take(132).copied().collect());
        let (tr, te) = midseason_split(&big).unwrap();
        assert_eq!((tr.n_matches(), te.n_matches()), (66, 66));
        assert_eq!(tr.matches[..], big.matches[..66]);
        assert!(midseason_split(&ds.with_matches(vec![])).is_err());
    }

    #[test]
    fn standard_hosting() {
        let r = HostingRule::Standard;
        assert_eq!((0..3).map(|k| r.higher_seed_hosts(k, 2)).collect::<Vec<_>>(), [true, false, true]);
        assert_eq!(
            (0..5).map(|k| r.higher_seed_hosts(k, 3)).collect::<Vec<_>>(),
            [true, true, false, false, true]
        );
    }

    #[test]
    fn invalid_nreq() {
        assert!(matches!(PlayoffRound::new(vec![(0, 1)], 4, HostingRule::Standard), Err(Error::InvalidNReq(4))));
        assert!(PlayoffRound::new(vec![(0, 1)], 3, HostingRule::Custom(vec![true; 3])).is_err());
    }

    /// Home team wins with probability `p` wherever it plays, as a six-cell
    /// vector from the higher seed's point of view when hosting.
    fn venue_free(p: f64) -> impl Fn(usize, usize, usize) -> [f64; 6] + Sync {
        move |_, h, _| {
            let w = if h == 0 { p } else { 1.0 - p };
            [(1.0 - w) / 3.0, (1.0 - w) / 3.0, (1.0 - w) / 3.0, w / 3.0, w / 3.0, w / 3.0]
        }
    }

    #[test]
    fn certain_winner_qualifies_in_nreq_matches() {
        for n_req in [2, 3] {
            let src = FnSource {
                n_draws: 100,
                n_teams: 2,
                f: venue_free(1.0),
            };
            let round = PlayoffRound::new(vec![(0, 1)], n_req, HostingRule::Standard).unwrap();
            let r = simulate_playoffs(&src, &round, 1, SeriesMode::EarlyStop).unwrap();
            assert_eq!(r.pairs[0].p_higher, 1.0);
            assert_eq!(r.pairs[0].mean_matches, n_req as f64);
        }
    }

    #[test]
    fn best_of_three_closed_form() {
        let n = 18000;
        let src = FnSource {
            n_draws: n,
            n_teams: 2,
            f: venue_free(0.7),
        };
        let round = PlayoffRound::new(vec![(0, 1)], 2, HostingRule::Standard).unwrap();
        let r = simulate_playoffs(&src, &round, 2, SeriesMode::EarlyStop).unwrap();
        let p: f64 = 0.7 * 0.7 + 2.0 * 0.7 * 0.7 * 0.3;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((r.pairs[0].p_higher - p).abs() < 3.0 * se, "{}", r.pairs[0].p_higher);
        assert_eq!(r.pairs[0].p_higher + r.pairs[0].p_lower, 1.0);
    }

    #[test]
    fn early_stop_equals_fixed_length() {
        let src = FnSource {
            n_draws: 3000,
            n_teams: 4,
            f: |t, h, a| {
                let w = 0.3 + 0.4 * ((t + 3 * h + a) % 7) as f64 / 7.0;
                [(1.0 - w) / 3.0, (1.0 - w) / 3.0, (1.0 - w) / 3.0, w / 2.0, w / 4.0, w / 4.0]
            },
        };
        for n_req in [2, 3] {
            let round = PlayoffRound::new(vec![(0, 3), (1, 2)], n_req, HostingRule::Standard).unwrap();
            let a = simulate_playoffs(&src, &round, 4, SeriesMode::EarlyStop).unwrap();
            let b = simulate_playoffs(&src, &round, 4, SeriesMode::FixedLength).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn playoff_mad_values() {
        let rec = |h, a, d| MatchRecord {
            home: h,
            away: a,
            set_diff: SetDiff::new(d).unwrap(),
        };
        let obs = vec![
            PlayoffMatch {
                round: "final".into(),
                record: rec(0, 1, -1),
            },
            PlayoffMatch {
                round: "final".into(),
                record: rec(1, 0, 1),
            },
        ];
        // Home side always wins 3-0: |3 - (-1)| = 4 and |3 - 1| = 2.
        let src = FnSource {
            n_draws: 50,
            n_teams: 2,
            f: |_, _, _| one_hot(3),
        };
        let out = playoff_mad(&src, &obs, 1).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.mean, 3.0);
        let perfect = FnSource {
            n_draws: 50,
            n_teams: 2,
            f: |_, h, _| if h == 0 { one_hot(-1) } else { one_hot(1) },
        };
        assert_eq!(playoff_mad(&perfect, &obs, 1).unwrap()[0].1.mean, 0.0);
        assert!(playoff_mad(&src, &[], 1).is_err());
    }

    #[test]
    fn predictions_are_deterministic_per_seed() {
        let a = predict_matches(&uniform(200, 4), &double_round_robin(4), 8).unwrap();
        let b = predict_matches(&uniform(200, 4), &double_round_robin(4), 8).unwrap();
        let c = predict_matches(&uniform(200, 4), &double_round_robin(4), 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
