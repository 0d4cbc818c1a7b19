//! The learning pipeline: sample tables, simulate them into a training set
//! for the surrogate, fit the surrogate, then push a relaxed table through
//! the frozen surrogate against measured timings and round it back to
//! integers.

mod extract;
mod optimize;
mod pipeline;
mod sampling;
mod simdata;
mod train;

pub use extract::{extract_parameters, FreezeEntry, FreezeMask, FreezeParseError};
pub use optimize::{optimize_parameter_table, predicted_mape, OptimizeConfig, OptimizeError, OptimizeOutcome};
pub use pipeline::{
    learn_table, prepare_surrogate, INIT_STREAM, SIMDATA_STREAM, run_difftune, DiffTuneConfig, DiffTuneError, DiffTuneReport, PreparedSurrogate, Stage,
    TableRun,
};
pub use sampling::{sample_parameter_table, SamplingSpec};
pub use simdata::{generate_simulated_dataset, SimTriple, SimulatedDataset};
pub use train::{surrogate_mape, train_surrogate, TrainConfig, TrainError, TrainOutcome};

use thiserror::Error;

/// Training was aborted because the loss stopped being finite.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("loss diverged at step {step} (value {value})")]
pub struct Diverged {
    pub step: u64,
    pub value: f64,
}
