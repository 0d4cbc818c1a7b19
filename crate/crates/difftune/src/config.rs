//! Flat `key=value` run configuration.
//!
//! One setting per line, `#` starts a comment. `freeze` may repeat; every
//! other key keeps its last value. Unknown keys are errors.

use std::path::PathBuf;

use difftune_core::difftune::{DiffTuneConfig, FreezeEntry, FreezeMask};
use difftune_core::params::NUM_PORTS;
use difftune_core::recovery::RecoveryConfig;
use difftune_core::synth::SynthConfig;
use difftune_core::tuner::TunerConfig;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value {value:?} for {key}")]
    BadValue { key: String, value: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub blocks: Option<PathBuf>,
    pub measurements: Option<PathBuf>,
    pub out: PathBuf,
    /// Table supplying the values of frozen entries.
    pub defaults: Option<PathBuf>,
    pub iterations: u32,
    pub difftune: DiffTuneConfig,
    pub synth: SynthConfig,
    pub seeds: Vec<u64>,
    pub baseline: bool,
    pub subset_learning: bool,
    pub tuner: TunerConfig,
    /// Block simulations for the tuner when run on its own.
    pub tuner_budget: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            blocks: None,
            measurements: None,
            out: PathBuf::from("out"),
            defaults: None,
            iterations: difftune_core::sim::DEFAULT_ITERATIONS,
            difftune: DiffTuneConfig::default(),
            synth: SynthConfig::default(),
            seeds: vec![0, 1, 2],
            baseline: true,
            subset_learning: true,
            tuner: TunerConfig::default(),
            tuner_budget: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply(text)?;
        Ok(c)
    }

    /// Applies every `key=value` line of `text` on top of the current values.
    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
        };
        let d = &mut self.difftune;
        match key {
            "blocks" => self.blocks = Some(value.into()),
            "measurements" => self.measurements = Some(value.into()),
            "out" => self.out = value.into(),
            "defaults" => self.defaults = Some(value.into()),
            "seed" => {
                d.seed = num(key, value)?;
                self.seeds = vec![d.seed];
            }
            "seeds" => {
                self.seeds = value.split(',').map(|s| num(key, s.trim())).collect::<Result<_, _>>()?;
                if self.seeds.is_empty() {
                    return Err(bad());
                }
            }
            "register_count" => {
                d.register_count = num(key, value)?;
                self.synth.register_count = d.register_count;
            }
            "ports" => {
                if num::<usize>(key, value)? != NUM_PORTS {
                    return Err(bad());
                }
            }
            "iterations" => self.iterations = num(key, value)?,
            "multiplier" => d.multiplier = num(key, value)?,
            "validation_multiplier" => d.validation_multiplier = num(key, value)?,
            "embed_dim" => d.surrogate.embed_dim = num(key, value)?,
            "hidden_dim" => d.surrogate.hidden_dim = num(key, value)?,
            "depth" => d.surrogate.depth = num(key, value)?,
            "surrogate_batch" => d.train.batch = num(key, value)?,
            "surrogate_group" => d.train.group = num(key, value)?,
            "surrogate_lr" => d.train.lr = num(key, value)?,
            "surrogate_final_lr" => d.train.final_lr = Some(num(key, value)?),
            "surrogate_passes" => d.train.passes = num(key, value)?,
            "table_batch" => d.optimize.batch = num(key, value)?,
            "table_lr" => d.optimize.lr = num(key, value)?,
            "table_final_lr" => d.optimize.final_lr = Some(num(key, value)?),
            "table_project" => d.optimize.project = num::<bool>(key, value)?.then_some(d.sampling),
            "table_round_after" => d.optimize.round_after = Some(num(key, value)?),
            "table_epochs" => d.optimize.epochs = num(key, value)?,
            "freeze" => {
                let e: FreezeEntry = value.parse().map_err(|_| bad())?;
                d.freeze.insert(e);
            }
            "learn_only" => {
                let families = value
                    .split(',')
                    .map(|f| difftune_core::ParamFamily::from_name(f.trim()).ok_or_else(bad))
                    .collect::<Result<Vec<_>, _>>()?;
                d.freeze = FreezeMask::except(&families);
            }
            "synth_opcodes" => self.synth.opcodes = num(key, value)?,
            "synth_blocks" => self.synth.blocks = num(key, value)?,
            "synth_min_len" => self.synth.min_len = num(key, value)?,
            "synth_max_len" => self.synth.max_len = num(key, value)?,
            "baseline" => self.baseline = num(key, value)?,
            "subset_learning" => self.subset_learning = num(key, value)?,
            "tuner_budget" => self.tuner_budget = Some(num(key, value)?),
            "tuner_subset" => self.tuner.subset_size = num(key, value)?,
            "tuner_iterations" => self.tuner.max_iterations = Some(num(key, value)?),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// `key=value` override, as given on the command line.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(k.trim(), v.trim())
    }

    pub fn recovery(&self) -> RecoveryConfig {
        RecoveryConfig {
            synth: self.synth,
            sampling: self.difftune.sampling,
            difftune: self.difftune.clone(),
            seeds: self.seeds.clone(),
            baseline: self.baseline,
            tuner: self.tuner,
            subset_learning: self.subset_learning,
            ..RecoveryConfig::default()
        }
    }
}
