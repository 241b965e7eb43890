//! Online model prediction sets.
//!
//! Given a stream of per-period losses for `m` candidate models, the engine
//! emits at every step a set of models that contains the next period's best
//! model at a controlled long-run rate. Sets are cut from a bootstrap model
//! confidence set family; the cut level is re-chosen each step by trading
//! set size against a feedback-weighted miscoverage penalty.
//!
//! - [`loss_stream`]: the loss matrix and its CSV format
//! - [`mcs`]: bootstrap elimination and the nested set family
//! - [`calibrator`]: penalty feedback and the rate grid search
//! - [`engine`]: offline initialization and the online loop
//! - [`simharness`]: synthetic loss designs and the ARMA experiment
//! - [`metrics`]: windowed coverage, cardinality and loss summaries
//! - [`cli`]: the `mps` command-line front end

pub mod calibrator;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod loss_stream;
pub mod mcs;
pub mod metrics;
pub mod rng;
pub mod simharness;

pub use config::MpsConfig;
pub use engine::{Engine, StepRecord};
pub use error::{Error, Result};
pub use loss_stream::LossMatrix;
pub use mcs::{ModelSetFamily, McsSettings};
