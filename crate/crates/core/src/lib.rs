//! Learning the parameter tables of a basic-block CPU simulator through a
//! differentiable surrogate.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation: file formats, configuration and the command line live in the
//! `difftune` companion crate.
//!
//! Module map:
//!
//! - [`dataset`]: instructions, basic blocks, measurements, splitting.
//! - [`params`]: parameter families and the per-opcode parameter table.
//! - [`sim`]: the out-of-order pipeline simulator and its trace hook.
//! - [`autodiff`]: a small reverse-mode tape, Adam, and gradient checking.
//! - [`surrogate`]: the stacked-LSTM surrogate of the simulator.
//! - [`difftune`]: sampling, simulated datasets, surrogate training, table
//!   optimization and parameter extraction.
//! - [`tuner`]: a black-box bandit-over-ensemble tuning baseline.
//! - [`metrics`]: MAPE, Kendall's tau, evaluation and sensitivity sweeps.
//! - [`synth`] and [`recovery`]: synthetic parameter-recovery experiments.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod dataset;
pub mod difftune;
pub(crate) mod math;
pub mod metrics;
pub mod params;
pub mod recovery;
pub mod sim;
pub mod surrogate;
pub mod synth;
pub mod tuner;

pub use dataset::{BasicBlock, Dataset, DatasetError, Instruction, Measurement};
pub use params::{IntTable, OpcodeParams, ParamFamily, ParameterTable, RealTable};
pub use sim::{PipelineSimulator, SimError, SimResult, Simulator};

/// Seeded generator used throughout the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate's seeded generator.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
