use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },

    #[error("line {line}: illegal set score {home}-{away} (winner needs exactly 3 sets, loser 0-2)")]
    IllegalScore { line: u64, home: u32, away: u32 },

    #[error("line {line}: team `{team}` plays itself")]
    SelfMatch { line: u64, team: String },

    #[error("duplicate header: {0}")]
    DuplicateHeader(String),

    #[error("bad header: expected `home_team,away_team,home_sets,away_sets`, got `{0}`")]
    BadHeader(String),

    #[error("set difference {0} outside {{-3,-2,-1,1,2,3}}")]
    InvalidSetDiff(i64),

    #[error("unknown team: {0}")]
    UnknownTeam(String),

    #[error("expected {expected} outcomes, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Skellam rates must be positive and finite (lambda1={lambda1}, lambda2={lambda2})")]
    InvalidRates { lambda1: f64, lambda2: f64 },

    #[error("all six ZDTS masses underflow (lambda1={lambda1}, lambda2={lambda2})")]
    DegeneratePmf { lambda1: f64, lambda2: f64 },

    #[error("non-finite ZDTS mean at lambda1={lambda1}, lambda2={lambda2}")]
    NonFiniteMean { lambda1: f64, lambda2: f64 },

    #[error("cutpoints are not strictly increasing: {0:?}")]
    UnorderedCutpoints(Vec<f64>),

    #[error("linear predictor {0} exceeds the allowed range |log lambda| <= 30")]
    RateOverflow(f64),

    #[error("parameter vector has length {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("log density returned NaN at {0:?}")]
    NanDensity(Vec<f64>),

    #[error("no finite starting point after {0} attempts")]
    NoFiniteStart(usize),

    #[error("chain {0}: no proposal accepted during warmup")]
    NoAcceptance(usize),

    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),

    #[error("diagnostic undefined: {0}")]
    Diagnostic(String),

    #[error("chain of length {len} is shorter than the Raftery-Lewis minimum {n_min}")]
    ChainTooShort { len: usize, n_min: usize },

    #[error("observation {0} has -inf log-likelihood under every draw")]
    DegenerateObservation(usize),

    #[error("segment fit: {0}")]
    SegmentFit(String),

    #[error("N_req must be 2 or 3, got {0}")]
    InvalidNReq(u32),
}
