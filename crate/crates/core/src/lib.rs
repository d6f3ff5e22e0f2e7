//! Bayesian modelling of volleyball set-differences.
//!
//! Two likelihoods are provided over the six-point outcome support
//! `{-3, -2, -1, 1, 2, 3}`:
//!
//! * an ordered-multinomial (proportional-odds logistic) model driven by a
//!   single general ability per team, and
//! * the zero-deflated truncated Skellam (ZDTS) model, a Skellam
//!   distribution conditioned on the legal volleyball support, with four
//!   linear-predictor variants.
//!
//! Around the likelihoods sit an adaptive random-walk Metropolis sampler,
//! convergence diagnostics (split-Rhat, effective sample size,
//! Raftery-Lewis), posterior-predictive league regeneration and play-off
//! simulation, WAIC/PSIS-LOO model comparison and the SESD regression used
//! to interpret ZDTS coefficients on the set-difference scale.

pub mod criteria;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod interpret;
pub mod model;
pub mod ordered_model;
pub mod predictive;
pub mod sampler;
pub mod summary;
pub mod zdts_model;

pub use data::{Dataset, LeagueTable, MatchRecord, SetDiff, Team};
pub use distributions::{SkellamParams, ZdtsPmf};
pub use error::{Error, Result};
pub use model::{ModelSpec, Params};
pub use sampler::{ChainSet, SamplerConfig};
pub use zdts_model::ModelVariant;
