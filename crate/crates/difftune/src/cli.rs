//! The `difftune` command line.
//!
//! Every subcommand reads `--config` (a flat `key=value` file) with
//! `--set key=value` overrides, prints a human-readable summary and writes a
//! CSV next to it (`--csv`, default `<out>/<subcommand>.csv`).
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical
//! divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use difftune_core::dataset::{opcode_vocabulary, split_dataset};
use difftune_core::difftune::{
    extract_parameters, generate_simulated_dataset, optimize_parameter_table, sample_parameter_table,
    train_surrogate, OptimizeError, TrainError, INIT_STREAM, SIMDATA_STREAM,
};
use difftune_core::metrics::{evaluate, sensitivity_sweep};
use difftune_core::params::TableLayout;
use difftune_core::recovery::run_recovery;
use difftune_core::sim::{simulate_traced, TraceEvent};
use difftune_core::surrogate::{Surrogate, TokenVocab};
use difftune_core::synth::synthesize;
use difftune_core::tuner::{tune, SearchSpace};
use difftune_core::{seeded_rng, Dataset, IntTable, ParamFamily, PipelineSimulator, RealTable, Simulator};

use crate::config::RunConfig;
use crate::format::{self, load_dataset, read_model, save_dataset, write_model};
use crate::report;

#[derive(Parser, Debug)]
#[command(name = "difftune", version, about = "Learn basic-block simulator parameters through a differentiable surrogate")]
pub struct Cli {
    /// Run configuration (flat key=value file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Where to write the CSV output.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// More logging and extra metrics (tau-b).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct DataArgs {
    /// Blocks file (default: `blocks` from the configuration).
    #[arg(long)]
    pub blocks: Option<PathBuf>,
    /// Measurements file (default: `measurements` from the configuration).
    #[arg(long)]
    pub measurements: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a workload labeled by a random hidden table.
    GenData {
        #[arg(long)]
        out: PathBuf,
    },
    /// Split a dataset 80/10/10 into train, valid and test files.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate every block under a table.
    Simulate {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        blocks: Option<PathBuf>,
        /// Print the cycle-level trace of each block.
        #[arg(long)]
        trace: bool,
    },
    /// Sample tables and simulate them on a dataset's blocks.
    GenSimdata {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a surrogate to simulated data.
    TrainSurrogate {
        #[arg(long)]
        simdata: PathBuf,
        /// Held-out simulated data for per-pass validation.
        #[arg(long)]
        validation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a relaxed table through a trained surrogate.
    OptimizeTable {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Starting table (integer); default is a random draw.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round a relaxed table to a valid integer table.
    Extract {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// MAPE and Kendall's tau of a table on a dataset.
    Evaluate {
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Dataset name for the report.
        #[arg(long, default_value = "dataset")]
        name: String,
    },
    /// MAPE as one global parameter varies.
    Sweep {
        #[arg(long)]
        table: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// dispatch_width or reorder_buffer_size.
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<u32>,
    },
    /// Black-box tuning baseline.
    BaselineTune {
        #[command(flatten)]
        data: DataArgs,
        /// Block simulations allowed.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end parameter-recovery experiment over the configured seeds.
    Recover {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData { .. } => "gen-data",
            Command::Split { .. } => "split",
            Command::Simulate { .. } => "simulate",
            Command::GenSimdata { .. } => "gen-simdata",
            Command::TrainSurrogate { .. } => "train-surrogate",
            Command::OptimizeTable { .. } => "optimize-table",
            Command::Extract { .. } => "extract",
            Command::Evaluate { .. } => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::BaselineTune { .. } => "baseline-tune",
            Command::Recover { .. } => "recover",
        }
    }
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 1, error: e.into() }
    }

    fn diverged(e: impl Into<anyhow::Error>) -> Self {
        CliError { code: 3, error: e.into() }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        CliError { code: 2, error }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "debug" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            e.code
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).map_err(|e| CliError::usage(anyhow!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    for s in &cli.set {
        c.set_pair(s).map_err(|e| CliError::usage(anyhow!("--set {s}: {e}")))?;
    }
    Ok(c)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn mkdir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        mkdir(dir)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn int_table(path: &Path) -> anyhow::Result<IntTable> {
    let t: IntTable = format::parse_table(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
    t.validate().with_context(|| format!("checking {}", path.display()))?;
    Ok(t)
}

fn dataset(data: &DataArgs, c: &RunConfig) -> Result<Dataset> {
    let b = data.blocks.as_ref().or(c.blocks.as_ref());
    let m = data.measurements.as_ref().or(c.measurements.as_ref());
    let (Some(b), Some(m)) = (b, m) else {
        return Err(CliError::usage(anyhow!("need --blocks and --measurements (or blocks=/measurements= in the configuration)")));
    };
    Ok(load_dataset(b, m, c.difftune.register_count).with_context(|| format!("loading {} and {}", b.display(), m.display()))?)
}

struct Out<'a> {
    cli: &'a Cli,
    config: &'a RunConfig,
}

impl Out<'_> {
    fn csv(&self, contents: &str) -> anyhow::Result<()> {
        let path = self
            .cli
            .csv
            .clone()
            .unwrap_or_else(|| self.config.out.join(format!("{}.csv", self.cli.command.name())));
        write(&path, contents)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = load_config(cli)?;
    let sim = PipelineSimulator {
        iterations: c.iterations,
    };
    let out = Out { cli, config: &c };
    match &cli.command {
        Command::GenData { out: dir } => {
            let s = synthesize(&sim, &c.synth, &c.difftune.sampling, c.difftune.seed).map_err(anyhow::Error::from)?;
            mkdir(dir)?;
            save_dataset(&s.dataset, &dir.join("blocks.txt"), &dir.join("measurements.txt")).map_err(anyhow::Error::from)?;
            write(&dir.join("hidden.table"), &format::write_table(&s.hidden))?;
            println!("{} blocks over {} opcodes in {}", s.dataset.len(), c.synth.opcodes, dir.display());
            out.csv(&format!("blocks,opcodes,seed\n{},{},{}\n", s.dataset.len(), c.synth.opcodes, c.difftune.seed))?;
        }
        Command::Split { data, out: dir } => {
            let d = dataset(data, &c)?;
            let (tr, va, te) = split_dataset(&d, c.difftune.seed).map_err(anyhow::Error::from)?;
            mkdir(dir)?;
            let mut csv = String::from("part,n\n");
            for (name, part) in [("train", &tr), ("valid", &va), ("test", &te)] {
                save_dataset(part, &dir.join(format!("{name}.blocks")), &dir.join(format!("{name}.measurements")))
                    .map_err(anyhow::Error::from)?;
                println!("{name}: {} measurements", part.len());
                csv.push_str(&format!("{name},{}\n", part.len()));
            }
            out.csv(&csv)?;
        }
        Command::Simulate { table, blocks, trace } => {
            let t = int_table(table)?;
            let path = blocks
                .as_ref()
                .or(c.blocks.as_ref())
                .ok_or_else(|| CliError::usage(anyhow!("need --blocks")))?;
            let bl = format::parse_blocks(&read(path)?).with_context(|| format!("parsing {}", path.display()))?;
            let mut csv = String::from("block_id,cycles_per_iteration,total_cycles\n");
            for b in &bl {
                let mut events: Vec<TraceEvent> = Vec::new();
                let r = if *trace {
                    simulate_traced(&t, b, c.iterations, &mut events)
                } else {
                    sim.simulate(&t, b)
                }
                .with_context(|| format!("simulating {}", b.id))?;
                println!("{}\t{:.4} cycles/iteration", b.id, r.cycles_per_iteration);
                for e in &events {
                    println!("  {e:?}");
                }
                csv.push_str(&format!("{},{},{}\n", b.id, r.cycles_per_iteration, r.total_cycles));
            }
            out.csv(&csv)?;
        }
        Command::GenSimdata { data, out: path } => {
            let d = dataset(data, &c)?;
            let layout = TableLayout::new(opcode_vocabulary(&d));
            let s = generate_simulated_dataset(
                &sim,
                &d,
                &layout,
                &c.difftune.sampling,
                c.difftune.multiplier,
                &mut seeded_rng(c.difftune.seed ^ SIMDATA_STREAM),
            )
            .map_err(anyhow::Error::from)?;
            write(path, &format::write_simdata(&s))?;
            println!("{} triples ({} skipped) in {}", s.len(), s.skipped, path.display());
            out.csv(&format!("triples,skipped\n{},{}\n", s.len(), s.skipped))?;
        }
        Command::TrainSurrogate {
            simdata,
            validation,
            out: path,
        } => {
            let s = format::parse_simdata(&read(simdata)?).with_context(|| format!("parsing {}", simdata.display()))?;
            let v = match validation {
                Some(p) => Some(format::parse_simdata(&read(p)?).with_context(|| format!("parsing {}", p.display()))?),
                None => None,
            };
            let mut mem: Vec<String> = s
                .blocks
                .iter()
                .flat_map(|b| b.instructions.iter().flat_map(|i| i.load.iter().chain(i.store.iter()).cloned()))
                .collect();
            mem.sort();
            mem.dedup();
            let vocab = TokenVocab::build(s.layout.opcodes(), &mem, c.difftune.register_count);
            let mut rng = seeded_rng(c.difftune.seed);
            let mut model = Surrogate::new(c.difftune.surrogate, vocab, &mut rng).map_err(|e| CliError::usage(anyhow!(e)))?;
            let mut labels: Vec<f64> = s.triples.iter().map(|t| t.timing).collect();
            labels.sort_by(f64::total_cmp);
            if let Some(m) = labels.get(labels.len() / 2) {
                model.set_output_bias(*m);
            }
            let cfg = difftune_core::difftune::TrainConfig {
                seed: c.difftune.seed,
                ..c.difftune.train
            };
            let curve = train_surrogate(&mut model, &s, v.as_ref(), &cfg).map_err(|e| match e {
                TrainError::Diverged(_) => CliError::diverged(e),
                other => anyhow::Error::from(other).into(),
            })?;
            write_model(path, &model).map_err(anyhow::Error::from)?;
            if let Some(l) = curve.train_loss.last() {
                println!("final training loss {l:.4}");
            }
            if let Some(l) = curve.validation_loss.last() {
                println!("final validation loss {l:.4}");
            }
            println!("model written to {}", path.display());
            out.csv(&report::training_csv(&curve))?;
        }
        Command::OptimizeTable {
            model,
            data,
            init,
            out: path,
        } => {
            let m = read_model(model).with_context(|| format!("loading {}", model.display()))?;
            let d = dataset(data, &c)?;
            let start: RealTable = match init {
                Some(p) => int_table(p)?.relax(),
                None => {
                    let ops = opcode_vocabulary(&d);
                    sample_parameter_table(&c.difftune.sampling, &ops, &mut seeded_rng(c.difftune.seed ^ INIT_STREAM)).relax()
                }
            };
            let mut start = start;
            if let Some(p) = &c.defaults {
                c.difftune.freeze.apply_defaults(&mut start, &int_table(p)?);
            }
            let cfg = difftune_core::difftune::OptimizeConfig {
                seed: c.difftune.seed,
                ..c.difftune.optimize
            };
            let r = optimize_parameter_table(&m, &d, &start, &c.difftune.freeze, &cfg).map_err(|e| match e {
                OptimizeError::Diverged(_) => CliError::diverged(e),
                other => anyhow::Error::from(other).into(),
            })?;
            write(path, &format::write_table(&r.table))?;
            println!("{} steps; relaxed table written to {}", r.steps, path.display());
            out.csv(&report::epoch_csv(&r.epoch_loss))?;
        }
        Command::Extract { table, out: path } => {
            let t: RealTable = format::parse_table(&read(table)?).with_context(|| format!("parsing {}", table.display()))?;
            let e = extract_parameters(&t);
            write(path, &format::write_table(&e))?;
            println!("integer table written to {}", path.display());
            out.csv(&format!("opcodes,dispatch_width,reorder_buffer_size\n{},{},{}\n", e.rows.len(), e.dispatch_width, e.reorder_buffer_size))?;
        }
        Command::Evaluate { table, data, name } => {
            let t = int_table(table)?;
            let d = dataset(data, &c)?;
            let predictor = table.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let r = evaluate(&sim, &t, &d, name, &predictor).map_err(anyhow::Error::from)?;
            println!("{}", report::eval_text(&r, cli.verbose));
            out.csv(&report::eval_csv([&r]))?;
        }
        Command::Sweep {
            table,
            data,
            parameter,
            values,
        } => {
            let t = int_table(table)?;
            let d = dataset(data, &c)?;
            let family = ParamFamily::from_name(parameter).ok_or_else(|| CliError::usage(anyhow!("unknown parameter {parameter:?}")))?;
            let r = sensitivity_sweep(&sim, &t, &d, family, values).map_err(|e| match e {
                difftune_core::metrics::MetricsError::NotSweepable | difftune_core::metrics::MetricsError::OutOfBounds { .. } => {
                    CliError::usage(e)
                }
                other => anyhow::Error::from(other).into(),
            })?;
            for (v, m) in &r.points {
                println!("{parameter}={v}: MAPE {:.2}%", 100.0 * m);
            }
            out.csv(&report::sweep_csv(&r))?;
        }
        Command::BaselineTune {
            data,
            budget,
            init,
            out: path,
        } => {
            let d = dataset(data, &c)?;
            let start = match init {
                Some(p) => int_table(p)?,
                None => sample_parameter_table(&c.difftune.sampling, &opcode_vocabulary(&d), &mut seeded_rng(c.difftune.seed ^ INIT_STREAM)),
            };
            let budget = budget
                .or(c.tuner_budget)
                .unwrap_or_else(|| (c.difftune.multiplier * d.len()) as u64);
            let cfg = difftune_core::tuner::TunerConfig {
                seed: c.difftune.seed,
                ..c.tuner
            };
            let r = tune(&sim, &d, &SearchSpace::default(), &start, budget, &cfg).map_err(anyhow::Error::from)?;
            write(path, &format::write_table(&r.best))?;
            println!(
                "best training MAPE {:.2}% after {} iterations, {} of {} block simulations{}",
                100.0 * r.best_mape,
                r.history.len(),
                r.budget.consumed(),
                r.budget.total(),
                if r.truncated { " (budget exhausted)" } else { "" }
            );
            out.csv(&report::tuner_csv(&r.history))?;
        }
        Command::Recover { out: dir } => {
            let rc = c.recovery();
            let r = run_recovery(&sim, &rc).map_err(|e| {
                if e.diverged() {
                    CliError::diverged(e)
                } else {
                    anyhow::Error::from(e).into()
                }
            })?;
            let text = report::recovery_text(&r);
            print!("{text}");
            if let Some(dir) = dir {
                write(&dir.join("recovery.txt"), &text)?;
                for run in &r.runs {
                    let s = run.seed;
                    write(&dir.join(format!("seed{s}_learned.table")), &format::write_table(&run.table.learned))?;
                    write(&dir.join(format!("seed{s}_hidden.table")), &format::write_table(&run.hidden))?;
                    write(&dir.join(format!("seed{s}_training.csv")), &report::training_csv(&run.surrogate.curve))?;
                    write(&dir.join(format!("seed{s}_table.csv")), &report::epoch_csv(&run.table.epoch_loss))?;
                    if let Some(b) = &run.baseline {
                        write(&dir.join(format!("seed{s}_baseline.csv")), &report::tuner_csv(&b.tune.history))?;
                    }
                }
            }
            out.csv(&report::recovery_csv(&r))?;
        }
    }
    Ok(())
}
