use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::optimize::predicted_mape;
use super::{
    extract_parameters, generate_simulated_dataset, optimize_parameter_table, sample_parameter_table,
    surrogate_mape, train_surrogate, FreezeMask, OptimizeConfig, SamplingSpec, TrainConfig, TrainOutcome,
};
use crate::dataset::{memory_ids, opcode_vocabulary, split_dataset, Dataset, DEFAULT_REGISTER_COUNT};
use crate::metrics::{evaluate, EvalReport};
use crate::params::{IntTable, TableLayout};
use crate::sim::{CountingSimulator, Simulator};
use crate::surrogate::{Surrogate, SurrogateConfig, TokenVocab};

/// Seed offsets keeping the simulated data and the random initial table on
/// different streams from anything else drawn with the run seed.
pub const SIMDATA_STREAM: u64 = 0x5157_D1FF;
pub const INIT_STREAM: u64 = 0x7AB1_E000;

#[derive(Clone, Debug, PartialEq)]
pub struct DiffTuneConfig {
    pub seed: u64,
    pub register_count: u16,
    pub sampling: SamplingSpec,
    /// Simulated triples per training block.
    pub multiplier: usize,
    /// Simulated triples per validation block, for held-out surrogate error.
    pub validation_multiplier: usize,
    pub surrogate: SurrogateConfig,
    pub train: TrainConfig,
    pub optimize: OptimizeConfig,
    pub freeze: FreezeMask,
    /// Values of frozen entries. Without it frozen entries keep their random
    /// initial values.
    pub defaults: Option<IntTable>,
}

impl Default for DiffTuneConfig {
    fn default() -> Self {
        DiffTuneConfig {
            seed: 0,
            register_count: DEFAULT_REGISTER_COUNT,
            sampling: SamplingSpec::default(),
            multiplier: 10,
            validation_multiplier: 1,
            surrogate: SurrogateConfig::default(),
            train: TrainConfig::default(),
            optimize: OptimizeConfig::default(),
            freeze: FreezeMask::none(),
            defaults: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Split,
    Generate,
    Train,
    Optimize,
    Extract,
    Evaluate,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Split => "split",
            Stage::Generate => "generate",
            Stage::Train => "train-surrogate",
            Stage::Optimize => "optimize-table",
            Stage::Extract => "extract",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{} stage failed: {message}", stage.name())]
pub struct DiffTuneError {
    pub stage: Stage,
    pub message: String,
    /// The failure was a non-finite loss.
    pub diverged: bool,
}

fn fail(stage: Stage) -> impl Fn(&dyn core::fmt::Display) -> DiffTuneError {
    move |e| DiffTuneError {
        stage,
        message: format!("{e}"),
        diverged: false,
    }
}

/// Everything up to and including a trained surrogate.
#[derive(Clone, Debug)]
pub struct PreparedSurrogate {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub layout: TableLayout,
    pub surrogate: Surrogate,
    pub curve: TrainOutcome,
    /// Surrogate error against simulator labels of held-out triples.
    pub heldout_mape: f64,
    pub heldout_triples: usize,
    pub train_triples: usize,
    pub skipped_draws: usize,
    /// Simulator invocations spent building the simulated datasets.
    pub simulator_calls: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRun {
    pub init: IntTable,
    pub learned: IntTable,
    pub steps: u64,
    pub epoch_loss: Vec<f64>,
    /// Surrogate-predicted error on the training set before and after.
    pub init_predicted_mape: f64,
    pub final_predicted_mape: f64,
    pub test: EvalReport,
    pub init_test: EvalReport,
    pub weights_fingerprint: u64,
}

#[derive(Clone, Debug)]
pub struct DiffTuneReport {
    pub surrogate: PreparedSurrogate,
    pub table: TableRun,
}

fn diverged_or(stage: Stage, e: &dyn core::fmt::Display, diverged: bool) -> DiffTuneError {
    DiffTuneError {
        stage,
        message: format!("{e}"),
        diverged,
    }
}

/// Split, simulate, and train the surrogate.
pub fn prepare_surrogate<S: Simulator + ?Sized>(
    sim: &S,
    data: &Dataset,
    config: &DiffTuneConfig,
) -> Result<PreparedSurrogate, DiffTuneError> {
    let (train, valid, test) = split_dataset(data, config.seed).map_err(|e| fail(Stage::Split)(&e))?;
    let layout = TableLayout::new(opcode_vocabulary(data));
    let counting = CountingSimulator::new(sim);
    let mut rng = crate::seeded_rng(config.seed ^ SIMDATA_STREAM);
    let simdata = generate_simulated_dataset(&counting, &train, &layout, &config.sampling, config.multiplier, &mut rng)
        .map_err(|e| fail(Stage::Generate)(&e))?;
    let heldout = generate_simulated_dataset(&counting, &valid, &layout, &config.sampling, config.validation_multiplier, &mut rng)
        .map_err(|e| fail(Stage::Generate)(&e))?;
    log::info!(
        "simulated {} training and {} held-out triples ({} simulator calls)",
        simdata.len(),
        heldout.len(),
        counting.calls()
    );

    let vocab = TokenVocab::build(layout.opcodes(), &memory_ids(data), config.register_count);
    let mut surrogate = Surrogate::new(config.surrogate, vocab, &mut rng).map_err(|e| fail(Stage::Train)(&e))?;
    let mut labels: Vec<f64> = simdata.triples.iter().map(|t| t.timing).collect();
    if !labels.is_empty() {
        labels.sort_by(f64::total_cmp);
        surrogate.set_output_bias(labels[labels.len() / 2]);
    }
    let train_cfg = TrainConfig {
        seed: config.seed ^ config.train.seed,
        ..config.train
    };
    let curve = train_surrogate(&mut surrogate, &simdata, Some(&heldout), &train_cfg).map_err(|e| {
        let d = matches!(e, super::TrainError::Diverged(_));
        diverged_or(Stage::Train, &e, d)
    })?;
    let heldout_mape = match curve.validation_loss.last() {
        Some(&v) => v,
        None => surrogate_mape(&surrogate, &heldout).map_err(|e| fail(Stage::Train)(&e))?,
    };
    Ok(PreparedSurrogate {
        train,
        valid,
        test,
        layout,
        surrogate,
        curve,
        heldout_mape,
        heldout_triples: heldout.len(),
        train_triples: simdata.len(),
        skipped_draws: simdata.skipped + heldout.skipped,
        simulator_calls: counting.calls(),
    })
}

/// Learns a table through an already trained surrogate and evaluates the
/// result (and the random starting table) on the test split. The simulator
/// is used only for that evaluation.
pub fn learn_table<S: Simulator + ?Sized>(
    sim: &S,
    prepared: &PreparedSurrogate,
    config: &DiffTuneConfig,
) -> Result<TableRun, DiffTuneError> {
    let mut rng = crate::seeded_rng(config.seed ^ INIT_STREAM);
    let init = sample_parameter_table(&config.sampling, prepared.layout.opcodes(), &mut rng);
    let mut relaxed = init.relax();
    if let Some(d) = &config.defaults {
        config.freeze.apply_defaults(&mut relaxed, d);
    }
    let init = extract_parameters(&relaxed);

    let model = &prepared.surrogate;
    let opt = |e: &dyn core::fmt::Display| fail(Stage::Optimize)(e);
    let init_predicted_mape = predicted_mape(model, &relaxed, &prepared.train).map_err(|e| opt(&e))?;
    let opt_cfg = OptimizeConfig {
        seed: config.seed ^ config.optimize.seed,
        ..config.optimize
    };
    let outcome = optimize_parameter_table(model, &prepared.train, &relaxed, &config.freeze, &opt_cfg).map_err(|e| {
        let d = matches!(e, super::OptimizeError::Diverged(_));
        diverged_or(Stage::Optimize, &e, d)
    })?;
    let final_predicted_mape = predicted_mape(model, &outcome.table, &prepared.train).map_err(|e| opt(&e))?;
    let learned = extract_parameters(&outcome.table);
    learned.validate().map_err(|e| fail(Stage::Extract)(&e))?;

    let ev = |e: &dyn core::fmt::Display| fail(Stage::Evaluate)(e);
    let test = evaluate(sim, &learned, &prepared.test, "test", "difftune").map_err(|e| ev(&e))?;
    let init_test = evaluate(sim, &init, &prepared.test, "test", "random-init").map_err(|e| ev(&e))?;
    log::info!(
        "learned table: test MAPE {:.4}, tau {:.4}; random init: test MAPE {:.4}",
        test.mape,
        test.kendall_tau,
        init_test.mape
    );
    Ok(TableRun {
        init,
        learned,
        steps: outcome.steps,
        epoch_loss: outcome.epoch_loss,
        init_predicted_mape,
        final_predicted_mape,
        test,
        init_test,
        weights_fingerprint: outcome.weights_fingerprint,
    })
}

/// The whole pipeline: split → simulate → train surrogate → optimize table
/// → extract → evaluate on the test split.
pub fn run_difftune<S: Simulator + ?Sized>(
    sim: &S,
    data: &Dataset,
    config: &DiffTuneConfig,
) -> Result<(IntTable, DiffTuneReport), DiffTuneError> {
    let surrogate = prepare_surrogate(sim, data, config)?;
    let table = learn_table(sim, &surrogate, config)?;
    Ok((table.learned.clone(), DiffTuneReport { surrogate, table }))
}
