use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use volley_core::criteria::{compare as criteria_for, pointwise_loglik, write_comparison_csv};
use volley_core::data::{MatchRecord, SetDiff};
use volley_core::diagnostics::DiagnosticReport;
use volley_core::interpret::{default_grid, fit_sesd, sesd_points, write_points_csv};
use volley_core::predictive::{
    mad_measures, playoff_mad, predict_matches, regenerate_league, simulate_playoffs, split_at_fraction,
    HostingRule, PlayoffMatch, PlayoffRound, PosteriorSource, SeriesMode,
};
use volley_core::sampler::fit as fit_model;
use volley_core::summary::{summarize, write_summary_csv};
use volley_core::{ChainSet, ModelSpec, ModelVariant, SamplerConfig};

use crate::run::{
    create, load_csv, load_with_teams, read_json, write_json, FittedRun, RunConfig, CHAINS_FILE, CONFIG_FILE,
    DATA_FILE, TEST_FILE,
};
use crate::{CompareArgs, FitArgs, InterpretArgs, MadArgs, ModelKind, PlayoffArgs, RunArgs};

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn run_config(a: &FitArgs) -> Result<RunConfig> {
    if let Some(path) = &a.config {
        return read_json(path);
    }
    let data = a.data.clone().expect("clap requires --data without --config");
    let names = load_csv(&data)?.team_names();
    let model = match (a.model.expect("clap requires --model without --config"), a.variant) {
        (ModelKind::Ordered, Some(_)) => bail!("--variant applies only to --model zdts"),
        (ModelKind::Ordered, None) => ModelSpec::ordered(names.len()),
        (ModelKind::Zdts, v) => ModelSpec::zdts(names.len(), ModelVariant::try_from(v.unwrap_or(1))?),
    };
    let d = SamplerConfig::for_model(&model);
    let sampler = SamplerConfig {
        chains: a.chains.unwrap_or(d.chains),
        total_iterations: a.iters.unwrap_or(d.total_iterations),
        warmup: a.warmup.unwrap_or(d.warmup),
        thin: a.thin.unwrap_or(d.thin),
        seed: a.seed,
        ..d
    };
    Ok(RunConfig {
        model,
        sampler,
        data,
        train_frac: a.train_frac,
        teams: names,
    })
}

/// Constrained draws: cutpoints or intercepts plus full effect vectors.
fn constrained(spec: &ModelSpec, chains: &ChainSet, dataset_teams: &[volley_core::Team]) -> Result<ChainSet> {
    Ok(chains.map_draws(spec.constrained_names(dataset_teams), |x| spec.constrained(x))?)
}

fn write_diagnostics(chains: &ChainSet, path: &Path) -> Result<()> {
    let report = DiagnosticReport::compute(chains)?;
    report.write_csv(create(path)?)?;
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let config = run_config(a)?;
    let full = load_with_teams(&config.data, &config.teams)?;
    let (train, test) = match config.train_frac {
        Some(f) => {
            let (tr, te) = split_at_fraction(&full, f)?;
            (tr, Some(te))
        }
        None => (full, None),
    };
    prepare_out(&a.out)?;
    train.write_csv(create(&a.out.join(DATA_FILE))?)?;
    if let Some(te) = &test {
        te.write_csv(create(&a.out.join(TEST_FILE))?)?;
    }
    write_json(&a.out.join(CONFIG_FILE), &config)?;

    log::info!("fitting {} to {} matches", config.model.name(), train.n_matches());
    let chains = fit_model(&config.model, &train, &config.sampler)?;
    chains.write_csv(create(&a.out.join(CHAINS_FILE))?)?;

    let cons = constrained(&config.model, &chains, &train.teams)?;
    write_summary_csv(&summarize(&cons), create(&a.out.join("summary.csv"))?)?;
    if let Err(e) = write_diagnostics(&cons, &a.out.join("diagnostics.csv")) {
        log::warn!("diagnostics skipped: {e}");
    }
    let stats: Vec<_> = chains.chains.iter().map(|c| c.stats.clone()).collect();
    write_json(&a.out.join("sampler_stats.json"), &stats)?;
    Ok(())
}

pub fn regen(a: &RunArgs) -> Result<()> {
    let run = FittedRun::load(&a.run)?;
    let out = a.out_dir();
    prepare_out(&out)?;
    write_json(&out.join("regen_config.json"), a)?;
    let source = PosteriorSource::new(&run.config.model, &run.chains)?;
    let regen = regenerate_league(&source, &run.dataset, a.seed)?;
    regen.write_csv(create(&out.join("regen.csv"))?, &run.config.teams)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct ObservedPlayoffRow {
    round: String,
    home_team: String,
    away_team: String,
    home_sets: u32,
    away_sets: u32,
}

fn load_playoff_matches(path: &Path, teams: &[String]) -> Result<Vec<PlayoffMatch>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(crate::run::open(path)?);
    let index = |name: &str| {
        teams
            .iter()
            .position(|t| t == name)
            .with_context(|| format!("unknown team `{name}` in {}", path.display()))
    };
    rdr.deserialize::<ObservedPlayoffRow>()
        .map(|row| {
            let row = row.with_context(|| format!("malformed row in {}", path.display()))?;
            Ok(PlayoffMatch {
                round: row.round,
                record: MatchRecord {
                    home: index(&row.home_team)?,
                    away: index(&row.away_team)?,
                    set_diff: SetDiff::new(row.home_sets as i64 - row.away_sets as i64)?,
                },
            })
        })
        .collect()
}

pub fn mad(a: &MadArgs) -> Result<()> {
    let run = FittedRun::load(&a.run.run)?;
    let out = a.run.out_dir();
    prepare_out(&out)?;
    write_json(&out.join("mad_config.json"), a)?;
    let source = PosteriorSource::new(&run.config.model, &run.chains)?;
    if let Some(obs) = &a.observed {
        let matches = load_playoff_matches(obs, &run.config.teams)?;
        let rounds = playoff_mad(&source, &matches, a.run.seed)?;
        let mut wtr = csv::Writer::from_writer(create(&out.join("playoff_mad.csv"))?);
        wtr.write_record(["round", "measure", "mean", "sd"])?;
        for (round, stat) in rounds {
            wtr.write_record([round, stat.measure, stat.mean.to_string(), stat.sd.to_string()])?;
        }
        wtr.flush()?;
        return Ok(());
    }
    let dataset = match &a.data {
        Some(p) => load_with_teams(p, &run.config.teams)?,
        None => run.dataset.clone(),
    };
    let pred = predict_matches(&source, &dataset.schedule(), a.run.seed)?;
    mad_measures(&pred, &dataset)?.write_csv(create(&out.join("mad.csv"))?)?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PairsFile {
    pairs: Vec<(String, String)>,
    nreq: Option<u32>,
    #[serde(default = "standard_hosting")]
    hosting: HostingRule,
}

fn standard_hosting() -> HostingRule {
    HostingRule::Standard
}

pub fn playoffs(a: &PlayoffArgs) -> Result<()> {
    let run = FittedRun::load(&a.run.run)?;
    let spec: PairsFile = read_json(&a.pairs)?;
    let Some(n_req) = a.nreq.or(spec.nreq) else {
        bail!("wins required not given: use --nreq or \"nreq\" in {}", a.pairs.display());
    };
    let index = |name: &str| {
        run.config
            .teams
            .iter()
            .position(|t| t == name)
            .with_context(|| format!("unknown team `{name}` in {}", a.pairs.display()))
    };
    let pairs = spec
        .pairs
        .iter()
        .map(|(hi, lo)| Ok((index(hi)?, index(lo)?)))
        .collect::<Result<Vec<_>>>()?;
    let round = PlayoffRound::new(pairs, n_req, spec.hosting)?;
    let out = a.run.out_dir();
    prepare_out(&out)?;
    write_json(&out.join("playoffs_config.json"), a)?;
    let source = PosteriorSource::new(&run.config.model, &run.chains)?;
    let result = simulate_playoffs(&source, &round, a.run.seed, SeriesMode::EarlyStop)?;
    result.write_csv(create(&out.join("playoffs.csv"))?, &run.config.teams)?;
    Ok(())
}

pub fn compare(a: &CompareArgs) -> Result<()> {
    prepare_out(&a.out)?;
    write_json(&a.out.join("compare_config.json"), a)?;
    let rows = a
        .runs
        .iter()
        .map(|dir| {
            let run = FittedRun::load(dir)?;
            let pll = pointwise_loglik(&run.chains, &run.config.model, &run.dataset)?;
            Ok(criteria_for(&run.label(), &pll)?)
        })
        .collect::<Result<Vec<_>>>()?;
    write_comparison_csv(&rows, create(&a.out.join("comparison.csv"))?)?;
    Ok(())
}

#[derive(Serialize)]
struct InterpretReport<'a> {
    model: String,
    n_points: usize,
    fit: &'a volley_core::interpret::SesdFit,
}

pub fn interpret(a: &InterpretArgs) -> Result<()> {
    let run = FittedRun::load(&a.run.run)?;
    let out = a.run.out_dir();
    prepare_out(&out)?;
    write_json(&out.join("interpret_config.json"), a)?;
    let points = sesd_points(&run.chains, &run.config.model, &run.dataset, a.max_iterations)?;
    let fit = fit_sesd(&points, &default_grid())?;
    write_json(
        &out.join("sesd.json"),
        &InterpretReport {
            model: run.config.model.name(),
            n_points: points.len(),
            fit: &fit,
        },
    )?;
    write_points_csv(&points, &fit, create(&out.join("sesd_points.csv"))?)?;
    Ok(())
}

pub fn diagnose(a: &RunArgs) -> Result<()> {
    let run = FittedRun::load(&a.run)?;
    let out = a.out_dir();
    prepare_out(&out)?;
    let cons = constrained(&run.config.model, &run.chains, &run.dataset.teams)?;
    write_diagnostics(&cons, &out.join("diagnostics.csv"))?;
    Ok(())
}
