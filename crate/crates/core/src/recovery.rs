//! Parameter-recovery experiments: label a synthetic workload with a hidden
//! table, learn a table back from the labels, and compare it with a random
//! table, the black-box tuner under the same simulation budget, and
//! latency-only learning.

use alloc::vec::Vec;

use crate::difftune::{
    learn_table, prepare_surrogate, DiffTuneConfig, DiffTuneError, FreezeMask, PreparedSurrogate, SamplingSpec, TableRun,
};
use crate::math;
use crate::metrics::{evaluate, EvalReport, MetricsError};
use crate::params::{IntTable, ParamFamily};
use crate::sim::Simulator;
use crate::synth::{synthesize, SynthConfig, SynthError};
use crate::tuner::{tune, SearchSpace, TuneResult, TunerConfig, TunerError};

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryConfig {
    pub synth: SynthConfig,
    pub sampling: SamplingSpec,
    /// Pipeline settings; its seed is replaced by each run's seed.
    pub difftune: DiffTuneConfig,
    pub seeds: Vec<u64>,
    pub baseline: bool,
    pub space: SearchSpace,
    pub tuner: TunerConfig,
    /// Also learn write latency alone with everything else at the truth.
    pub subset_learning: bool,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            synth: SynthConfig::default(),
            sampling: SamplingSpec::default(),
            difftune: DiffTuneConfig::default(),
            seeds: alloc::vec![0, 1, 2],
            baseline: true,
            space: SearchSpace::default(),
            tuner: TunerConfig::default(),
            subset_learning: true,
        }
    }
}

impl RecoveryConfig {
    /// Settings for the 3,000-block desk-scale experiment. Both optimizers
    /// take many more, smaller steps than the defaults (at this data size,
    /// batch 256 leaves only a handful of updates per pass). The surrogate
    /// trains on groups of ten tables per block with an annealed learning
    /// rate; the table keeps a constant one and stays inside the sampled
    /// ranges the surrogate was trained on.
    pub fn desk() -> Self {
        let mut c = RecoveryConfig::default();
        c.difftune.train.batch = 32;
        c.difftune.train.group = 10;
        c.difftune.train.passes = 24;
        c.difftune.train.final_lr = Some(5e-5);
        c.difftune.optimize.batch = 32;
        c.difftune.optimize.epochs = 20;
        c.difftune.optimize.lr = 0.02;
        c.difftune.optimize.project = Some(c.sampling);
        c
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RecoveryError {
    #[error("seed {seed}: {source}")]
    Synth { seed: u64, source: SynthError },
    #[error("seed {seed}: {source}")]
    DiffTune { seed: u64, source: DiffTuneError },
    #[error("seed {seed}: baseline: {source}")]
    Baseline { seed: u64, source: TunerError },
    #[error("seed {seed}: evaluation: {source}")]
    Metrics { seed: u64, source: MetricsError },
}

impl RecoveryError {
    pub fn diverged(&self) -> bool {
        matches!(self, RecoveryError::DiffTune { source, .. } if source.diverged)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineRun {
    pub tune: TuneResult,
    pub test: EvalReport,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub hidden: IntTable,
    pub surrogate: PreparedSurrogate,
    pub table: TableRun,
    pub baseline: Option<BaselineRun>,
    pub subset: Option<TableRun>,
}

/// Sample mean and standard deviation (n − 1 denominator; zero for n < 2).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, math::sqrt(var))
}

/// One replicate: a fresh workload and hidden table drawn from `seed`.
pub fn run_seed<S: Simulator + ?Sized>(sim: &S, config: &RecoveryConfig, seed: u64) -> Result<SeedRun, RecoveryError> {
    let data = synthesize(sim, &config.synth, &config.sampling, seed).map_err(|source| RecoveryError::Synth { seed, source })?;
    let mut dt = DiffTuneConfig {
        seed,
        sampling: config.sampling,
        register_count: config.synth.register_count,
        ..config.difftune.clone()
    };
    if dt.optimize.project.is_some() {
        dt.optimize.project = Some(config.sampling);
    }
    let wrap = |source| RecoveryError::DiffTune { seed, source };
    let prepared = prepare_surrogate(sim, &data.dataset, &dt).map_err(wrap)?;
    let table = learn_table(sim, &prepared, &dt).map_err(wrap)?;

    let baseline = if config.baseline {
        let tuner = TunerConfig { seed, ..config.tuner };
        let result = tune(sim, &prepared.train, &config.space, &table.init, prepared.simulator_calls, &tuner)
            .map_err(|source| RecoveryError::Baseline { seed, source })?;
        let test = evaluate(sim, &result.best, &prepared.test, "test", "baseline")
            .map_err(|source| RecoveryError::Metrics { seed, source })?;
        log::info!("seed {seed}: baseline test MAPE {:.4}", test.mape);
        Some(BaselineRun { tune: result, test })
    } else {
        None
    };

    let subset = if config.subset_learning {
        let sub = DiffTuneConfig {
            freeze: FreezeMask::except(&[ParamFamily::WriteLatency]),
            defaults: Some(data.hidden.clone()),
            ..dt.clone()
        };
        let run = learn_table(sim, &prepared, &sub).map_err(wrap)?;
        log::info!("seed {seed}: latency-only test MAPE {:.4}", run.test.mape);
        Some(run)
    } else {
        None
    };

    Ok(SeedRun {
        seed,
        hidden: data.hidden,
        surrogate: prepared,
        table,
        baseline,
        subset,
    })
}

#[derive(Clone, Debug)]
pub struct RecoveryReport {
    pub runs: Vec<SeedRun>,
}

impl RecoveryReport {
    fn stat(&self, f: impl Fn(&SeedRun) -> Option<f64>) -> Option<(f64, f64)> {
        let v: Vec<f64> = self.runs.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean_std(&v))
    }

    pub fn surrogate_mape(&self) -> (f64, f64) {
        self.stat(|r| Some(r.surrogate.heldout_mape)).unwrap_or_default()
    }

    pub fn learned_mape(&self) -> (f64, f64) {
        self.stat(|r| Some(r.table.test.mape)).unwrap_or_default()
    }

    pub fn learned_tau(&self) -> (f64, f64) {
        self.stat(|r| Some(r.table.test.kendall_tau)).unwrap_or_default()
    }

    pub fn random_mape(&self) -> (f64, f64) {
        self.stat(|r| Some(r.table.init_test.mape)).unwrap_or_default()
    }

    pub fn baseline_mape(&self) -> Option<(f64, f64)> {
        self.stat(|r| r.baseline.as_ref().map(|b| b.test.mape))
    }

    pub fn subset_mape(&self) -> Option<(f64, f64)> {
        self.stat(|r| r.subset.as_ref().map(|s| s.test.mape))
    }
}

/// Runs every seed in order.
pub fn run_recovery<S: Simulator + ?Sized>(sim: &S, config: &RecoveryConfig) -> Result<RecoveryReport, RecoveryError> {
    let runs = config
        .seeds
        .iter()
        .map(|&s| run_seed(sim, config, s))
        .collect::<Result<_, _>>()?;
    Ok(RecoveryReport { runs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[]), (0.0, 0.0));
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
