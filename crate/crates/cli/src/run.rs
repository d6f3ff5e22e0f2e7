//! Fitted-run directories: config echo, chains, and the training data.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use volley_core::data::{load_dataset, MatchRecord};
use volley_core::{ChainSet, Dataset, ModelSpec, SamplerConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const CHAINS_FILE: &str = "chains.csv";
pub const DATA_FILE: &str = "data.csv";
pub const TEST_FILE: &str = "test.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub sampler: SamplerConfig,
    /// Source dataset as given on the command line.
    pub data: PathBuf,
    pub train_frac: Option<f64>,
    /// Team registry; column order of the chains follows it.
    pub teams: Vec<String>,
}

pub struct FittedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub chains: ChainSet,
    pub dataset: Dataset,
}

pub fn open(path: &Path) -> Result<File> {
    File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed JSON in {}", path.display()))
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    load_dataset(BufReader::new(open(path)?)).with_context(|| format!("cannot load {}", path.display()))
}

/// Loads a match file and re-indexes its teams against `teams`.
pub fn load_with_teams(path: &Path, teams: &[String]) -> Result<Dataset> {
    let raw = load_csv(path)?;
    let index = |name: &str| {
        teams
            .iter()
            .position(|t| t == name)
            .with_context(|| format!("team `{name}` in {} is not part of the fitted run", path.display()))
    };
    let matches = raw
        .matches
        .iter()
        .map(|m| {
            Ok(MatchRecord {
                home: index(&raw.teams[m.home].name)?,
                away: index(&raw.teams[m.away].name)?,
                set_diff: m.set_diff,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(teams.to_vec(), matches)?)
}

impl FittedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            bail!("no fitted run at {}", dir.display());
        }
        let config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
        let chains = ChainSet::read_csv(BufReader::new(open(&dir.join(CHAINS_FILE))?))
            .with_context(|| format!("cannot read chains in {}", dir.display()))?;
        if chains.dim() != config.model.dim() {
            bail!(
                "chains in {} have {} columns, model needs {}",
                dir.display(),
                chains.dim(),
                config.model.dim()
            );
        }
        let dataset = load_with_teams(&dir.join(DATA_FILE), &config.teams)?;
        Ok(FittedRun {
            dir: dir.to_path_buf(),
            config,
            chains,
            dataset,
        })
    }

    pub fn label(&self) -> String {
        self.dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.config.model.name())
    }
}
