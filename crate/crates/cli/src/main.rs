mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "volley", version, about = "Bayesian models for volleyball set-differences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ordered,
    Zdts,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Replay a previous run from its config.json; other flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    pub model: Option<ModelKind>,
    /// ZDTS linear-predictor variant (1-4).
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub variant: Option<u8>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Total iterations per chain, before thinning.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Warmup length in kept (thinned) iterations.
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Match CSV: home_team,away_team,home_sets,away_sets.
    #[arg(long, required_unless_present = "config")]
    pub data: Option<PathBuf>,
    /// Run directory to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Train on this leading fraction of the matches (file order).
    #[arg(long)]
    pub train_frac: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    /// Fitted run directory.
    #[arg(long)]
    pub run: PathBuf,
    /// Report directory (defaults to the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

impl RunArgs {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.run.clone())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct MadArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Matches to score against (defaults to the training data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Observed play-off matches: round,home_team,away_team,home_sets,away_sets.
    #[arg(long)]
    pub observed: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PlayoffArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Round specification JSON: {"pairs": [["A", "B"], ...], "nreq": 2, "hosting": "standard"}.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Overrides the wins required from the pairs file.
    #[arg(long)]
    pub nreq: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Fitted run directories, one table row each.
    #[arg(long = "run", required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InterpretArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Posterior draws used for the point cloud.
    #[arg(long, default_value_t = volley_core::interpret::MAX_ITERATIONS)]
    pub max_iterations: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write chains, posterior summary and diagnostics.
    Fit(FitArgs),
    /// Regenerate the league table from the posterior predictive.
    Regen(RunArgs),
    /// Mean absolute deviance of predicted against observed summaries.
    Mad(MadArgs),
    /// Play-off qualification probabilities.
    Playoffs(PlayoffArgs),
    /// WAIC and LOOIC for one or more fitted runs.
    Compare(CompareArgs),
    /// SESD regression for reading ZDTS coefficients.
    Interpret(InterpretArgs),
    /// Recompute convergence diagnostics.
    Diagnose(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Fit(a) => commands::fit(&a),
        Command::Regen(a) => commands::regen(&a),
        Command::Mad(a) => commands::mad(&a),
        Command::Playoffs(a) => commands::playoffs(&a),
        Command::Compare(a) => commands::compare(&a),
        Command::Interpret(a) => commands::interpret(&a),
        Command::Diagnose(a) => commands::diagnose(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
