//! A black-box tuning baseline: a UCB1 bandit choosing among three search
//! techniques that propose integer tables directly, each proposal scored by
//! simulating a fixed subset of the training blocks under a budget of block
//! simulations.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::dataset::Dataset;
use crate::math;
use crate::metrics::{self, MetricsError};
use crate::params::{IntTable, TableLayout, GLOBAL_WIDTH, ROW_WIDTH};
use crate::sim::Simulator;

/// Inclusive bounds of every searched entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    /// Bounds of each per-opcode row entry, in row order.
    pub row: [(u32, u32); ROW_WIDTH],
    pub dispatch_width: (u32, u32),
    pub reorder_buffer_size: (u32, u32),
}

impl Default for SearchSpace {
    /// Per-opcode entries in [0, 5] (micro-ops in [1, 5]), dispatch width in
    /// [1, 10], reorder buffer in [50, 250].
    fn default() -> Self {
        let mut row = [(0, 5); ROW_WIDTH];
        row[0] = (1, 5);
        SearchSpace {
            row,
            dispatch_width: (1, 10),
            reorder_buffer_size: (50, 250),
        }
    }
}

impl SearchSpace {
    /// Bounds of flat entry `entry`: rows in layout order, then the globals.
    pub fn bounds(&self, layout: &TableLayout, entry: usize) -> (u32, u32) {
        let n = layout.len() * ROW_WIDTH;
        if entry < n {
            self.row[entry % ROW_WIDTH]
        } else if entry == n {
            self.dispatch_width
        } else {
            self.reorder_buffer_size
        }
    }

    pub fn contains(&self, table: &IntTable) -> bool {
        let inside = |v: u32, (lo, hi): (u32, u32)| lo <= v && v <= hi;
        inside(table.dispatch_width, self.dispatch_width)
            && inside(table.reorder_buffer_size, self.reorder_buffer_size)
            && table
                .rows
                .values()
                .all(|r| r.to_row().iter().zip(&self.row).all(|(&v, &b)| inside(v, b)))
    }

    /// Clamps every entry into bounds.
    pub fn clamp(&self, table: &IntTable) -> IntTable {
        let mut t = table.clone();
        let c = |v: u32, (lo, hi): (u32, u32)| v.clamp(lo, hi);
        t.dispatch_width = c(t.dispatch_width, self.dispatch_width);
        t.reorder_buffer_size = c(t.reorder_buffer_size, self.reorder_buffer_size);
        for r in t.rows.values_mut() {
            let mut row = r.to_row();
            for (v, &b) in row.iter_mut().zip(&self.row) {
                *v = c(*v, b);
            }
            *r = crate::params::OpcodeParams::from_row(&row);
        }
        t
    }
}

/// Block simulations allowed and used so far.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    total: u64,
    consumed: u64,
}

impl Budget {
    pub fn new(total: u64) -> Self {
        Budget { total, consumed: 0 }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn consumed(&self) -> u64 {
        self.consumed
    }

    pub fn remaining(&self) -> u64 {
        self.total - self.consumed
    }

    /// Takes `n` units, or none if fewer remain.
    pub fn consume(&mut self, n: u64) -> Result<(), TunerError> {
        if n > self.remaining() {
            return Err(TunerError::InsufficientBudget {
                needed: n,
                remaining: self.remaining(),
            });
        }
        self.consumed += n;
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error("budget has {remaining} block simulations left, {needed} needed")]
    InsufficientBudget { needed: u64, remaining: u64 },
    #[error("nothing to tune on")]
    EmptyDataset,
    #[error("initial table is missing opcode {0:?}")]
    MissingOpcode(alloc::string::String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// MAPE of `table` on `subset`, charging one budget unit per block.
pub fn evaluate_candidate<S: Simulator + ?Sized>(
    sim: &S,
    table: &IntTable,
    subset: &Dataset,
    budget: &mut Budget,
) -> Result<f64, TunerError> {
    budget.consume(subset.len() as u64)?;
    let preds = metrics::predict_all(sim, table, subset)?;
    let actual: Vec<f64> = subset.measurements().iter().map(|m| m.timing).collect();
    Ok(metrics::mape(&preds, &actual)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Technique {
    UniformResample,
    HillClimb,
    Annealing,
}

impl Technique {
    pub const ALL: [Technique; 3] = [Technique::UniformResample, Technique::HillClimb, Technique::Annealing];

    pub fn name(self) -> &'static str {
        match self {
            Technique::UniformResample => "uniform",
            Technique::HillClimb => "hill_climb",
            Technique::Annealing => "annealing",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TunerConfig {
    pub seed: u64,
    /// Blocks in the fixed evaluation subset.
    pub subset_size: usize,
    /// Optional cap on search iterations.
    pub max_iterations: Option<usize>,
    /// Starting temperature of the annealer, in MAPE units.
    pub initial_temperature: f64,
    /// Most entries the annealer mutates at once (at full temperature).
    pub max_mutation_distance: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            seed: 0,
            subset_size: 512,
            max_iterations: None,
            initial_temperature: 0.1,
            max_mutation_distance: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iteration {
    pub iteration: usize,
    pub technique: Technique,
    pub candidate_mape: f64,
    pub best_mape: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best: IntTable,
    /// Best table's MAPE on the full training set.
    pub best_mape: f64,
    /// Best table's MAPE on the evaluation subset.
    pub subset_mape: f64,
    /// The search stopped because the budget ran out.
    pub truncated: bool,
    pub history: Vec<Iteration>,
    pub budget: Budget,
}

struct Arm {
    plays: u64,
    reward: f64,
}

fn ucb1(arms: &[Arm], t: u64) -> usize {
    if let Some(i) = arms.iter().position(|a| a.plays == 0) {
        return i;
    }
    let lt = math::ln(t as f64);
    let mut best = (0, f64::NEG_INFINITY);
    for (i, a) in arms.iter().enumerate() {
        let n = a.plays as f64;
        let s = a.reward / n + math::sqrt(2.0 * lt / n);
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

struct Flat {
    layout: TableLayout,
    rows: Vec<u32>,
    globals: [u32; GLOBAL_WIDTH],
}

impl Flat {
    fn get(&self, e: usize) -> u32 {
        let n = self.rows.len();
        if e < n { self.rows[e] } else { self.globals[e - n] }
    }

    fn set(&mut self, e: usize, v: u32) {
        let n = self.rows.len();
        if e < n {
            self.rows[e] = v
        } else {
            self.globals[e - n] = v
        }
    }

    fn entries(&self) -> usize {
        self.rows.len() + GLOBAL_WIDTH
    }

    fn table(&self) -> IntTable {
        self.layout.unflatten(&self.rows, self.globals)
    }
}

fn mutate(flat: &mut Flat, space: &SearchSpace, k: usize, rng: &mut impl Rng) {
    let n = flat.entries();
    for e in index::sample(rng, n, k.min(n)) {
        let (lo, hi) = space.bounds(&flat.layout, e);
        if lo == hi {
            continue;
        }
        let old = flat.get(e);
        // A different value in bounds.
        let mut v = rng.gen_range(lo..hi);
        if v >= old {
            v += 1;
        }
        flat.set(e, v);
    }
}

/// Searches integer tables inside `space`, starting from `init`, spending
/// at most `budget` block simulations. One full pass over `train` is
/// reserved to score the final incumbent; every search step is scored on a
/// fixed random subset. Returns the best table seen.
pub fn tune<S: Simulator + ?Sized>(
    sim: &S,
    train: &Dataset,
    space: &SearchSpace,
    init: &IntTable,
    budget: u64,
    config: &TunerConfig,
) -> Result<TuneResult, TunerError> {
    if train.is_empty() {
        return Err(TunerError::EmptyDataset);
    }
    let mut budget = Budget::new(budget);
    let full = train.len() as u64;
    if budget.total() < full {
        return Err(TunerError::InsufficientBudget {
            needed: full,
            remaining: budget.total(),
        });
    }
    let mut rng = crate::seeded_rng(config.seed);
    let opcodes: Vec<_> = init.opcodes().map(Into::into).collect();
    let layout = TableLayout::new(opcodes);
    for (b, _) in train.examples() {
        for i in &b.instructions {
            if layout.index_of(&i.opcode).is_none() {
                return Err(TunerError::MissingOpcode(i.opcode.clone()));
            }
        }
    }
    let init = space.clamp(init);
    let flat_of = |t: &IntTable| {
        let (rows, globals) = layout.flatten(t).expect("layout from table");
        Flat {
            layout: layout.clone(),
            rows,
            globals,
        }
    };

    let subset_idx = index::sample(&mut rng, train.len(), config.subset_size.min(train.len())).into_vec();
    let mut subset_idx = subset_idx;
    subset_idx.sort_unstable();
    let subset = train.select(&subset_idx);
    let cost = subset.len() as u64;
    let can_search = |b: &Budget| b.remaining() >= cost + full;

    let mut best = init.clone();
    let mut best_mape = f64::INFINITY;
    let mut history = Vec::new();
    let mut truncated = false;
    if can_search(&budget) {
        best_mape = evaluate_candidate(sim, &best, &subset, &mut budget)?;
        let mut current = flat_of(&best);
        let mut current_mape = best_mape;
        let mut arms: Vec<Arm> = Technique::ALL.iter().map(|_| Arm { plays: 0, reward: 0.0 }).collect();
        // Iterations the budget allows, for the annealing schedule.
        let horizon = ((budget.remaining() - full) / cost).max(1) as f64;
        let mut it = 0;
        loop {
            if config.max_iterations.is_some_and(|m| it >= m) {
                break;
            }
            if !can_search(&budget) {
                truncated = true;
                break;
            }
            let arm = ucb1(&arms, it as u64 + 1);
            let technique = Technique::ALL[arm];
            let cool = (1.0 - it as f64 / horizon).max(0.0);
            let candidate = match technique {
                Technique::UniformResample => {
                    let mut f = flat_of(&best);
                    for e in 0..f.entries() {
                        let (lo, hi) = space.bounds(&layout, e);
                        f.set(e, rng.gen_range(lo..=hi));
                    }
                    f
                }
                Technique::HillClimb => {
                    let mut f = flat_of(&best);
                    mutate(&mut f, space, 1, &mut rng);
                    f
                }
                Technique::Annealing => {
                    let mut f = Flat {
                        layout: layout.clone(),
                        rows: current.rows.clone(),
                        globals: current.globals,
                    };
                    let k = 1 + math::round(cool * (config.max_mutation_distance.max(1) - 1) as f64) as usize;
                    mutate(&mut f, space, k, &mut rng);
                    f
                }
            };
            let table = candidate.table();
            debug_assert!(space.contains(&table));
            let m = evaluate_candidate(sim, &table, &subset, &mut budget)?;
            let improved = m < best_mape;
            if technique == Technique::Annealing {
                let t = config.initial_temperature * cool;
                let accept = m <= current_mape || (t > 0.0 && rng.gen::<f64>() < math::exp(-(m - current_mape) / t));
                if accept {
                    current = candidate;
                    current_mape = m;
                }
            }
            if improved {
                best = table;
                best_mape = m;
            }
            arms[arm].plays += 1;
            arms[arm].reward += if improved { 1.0 } else { 0.0 };
            history.push(Iteration {
                iteration: it,
                technique,
                candidate_mape: m,
                best_mape,
            });
            it += 1;
        }
    }
    let subset_mape = best_mape;
    let best_full = evaluate_candidate(sim, &best, train, &mut budget)?;
    Ok(TuneResult {
        best,
        best_mape: best_full,
        subset_mape,
        truncated,
        history,
        budget,
    })
}
