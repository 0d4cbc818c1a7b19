//! Instructions, basic blocks and timing measurements.
//!
//! The ISA is abstract: an opcode is an open string token and every
//! instruction lists the registers it writes and reads explicitly. Memory
//! operands are symbolic ids; two operands alias iff their ids are equal.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use thiserror::Error;

/// Default number of architectural registers.
pub const DEFAULT_REGISTER_COUNT: u16 = 16;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Instruction {
    pub opcode: String,
    pub writes: Vec<u16>,
    pub reads: Vec<u16>,
    pub load: Option<String>,
    pub store: Option<String>,
}

impl Instruction {
    pub fn new(opcode: impl Into<String>, writes: Vec<u16>, reads: Vec<u16>) -> Self {
        Instruction {
            opcode: opcode.into(),
            writes,
            reads,
            load: None,
            store: None,
        }
    }

    pub fn with_load(mut self, mem: impl Into<String>) -> Self {
        self.load = Some(mem.into());
        self
    }

    pub fn with_store(mut self, mem: impl Into<String>) -> Self {
        self.store = Some(mem.into());
        self
    }

    pub fn validate(&self, register_count: u16) -> Result<(), DatasetError> {
        if self.opcode.is_empty() {
            return Err(DatasetError::EmptyOpcode);
        }
        if let Some(&reg) = self
            .writes
            .iter()
            .chain(self.reads.iter())
            .find(|&&r| r >= register_count)
        {
            return Err(DatasetError::RegisterOutOfRange {
                register: reg,
                register_count,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicBlock {
    pub id: String,
    pub instructions: Vec<Instruction>,
}

impl BasicBlock {
    pub fn new(id: impl Into<String>, instructions: Vec<Instruction>) -> Result<Self, DatasetError> {
        let id = id.into();
        if instructions.is_empty() {
            return Err(DatasetError::EmptyBlock(id));
        }
        Ok(BasicBlock { id, instructions })
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn validate(&self, register_count: u16) -> Result<(), DatasetError> {
        if self.instructions.is_empty() {
            return Err(DatasetError::EmptyBlock(self.id.clone()));
        }
        self.instructions
            .iter()
            .try_for_each(|inst| inst.validate(register_count))
    }
}

/// Measured timing of one block, in cycles per iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub block_id: String,
    pub timing: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("empty opcode")]
    EmptyOpcode,
    #[error("empty block {0:?}")]
    EmptyBlock(String),
    #[error("register id out of range: r{register} (register count {register_count})")]
    RegisterOutOfRange { register: u16, register_count: u16 },
    #[error("duplicate block id {0:?}")]
    DuplicateId(String),
    #[error("unresolved block_id {0:?}")]
    UnresolvedBlockId(String),
    #[error("non-positive timing {timing} for block {block_id:?}")]
    NonPositiveTiming { block_id: String, timing: f64 },
    #[error("dataset too small to split: {0} examples, need at least 10")]
    TooSmall(usize),
}

/// Blocks plus the measurements that reference them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    blocks: BTreeMap<String, BasicBlock>,
    measurements: Vec<Measurement>,
}

impl Dataset {
    pub fn new(blocks: Vec<BasicBlock>, measurements: Vec<Measurement>) -> Result<Self, DatasetError> {
        let mut map = BTreeMap::new();
        for block in blocks {
            if block.is_empty() {
                return Err(DatasetError::EmptyBlock(block.id));
            }
            if map.contains_key(&block.id) {
                return Err(DatasetError::DuplicateId(block.id));
            }
            map.insert(block.id.clone(), block);
        }
        for m in &measurements {
            if !map.contains_key(&m.block_id) {
                return Err(DatasetError::UnresolvedBlockId(m.block_id.clone()));
            }
            // Written so that NaN is rejected too.
            if !(m.timing > 0.0) {
                return Err(DatasetError::NonPositiveTiming {
                    block_id: m.block_id.clone(),
                    timing: m.timing,
                });
            }
        }
        Ok(Dataset {
            blocks: map,
            measurements,
        })
    }

    /// Number of measurements.
    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BasicBlock> {
        self.blocks.values()
    }

    pub fn block(&self, id: &str) -> Option<&BasicBlock> {
        self.blocks.get(id)
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    /// `(block, timing)` pairs in measurement order.
    pub fn examples(&self) -> impl Iterator<Item = (&BasicBlock, f64)> + '_ {
        self.measurements
            .iter()
            .map(move |m| (&self.blocks[&m.block_id], m.timing))
    }

    /// Restricts the dataset to the given measurement indices, keeping only
    /// the blocks they reference.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let measurements: Vec<Measurement> =
            indices.iter().map(|&i| self.measurements[i].clone()).collect();
        let mut blocks = BTreeMap::new();
        for m in &measurements {
            blocks
                .entry(m.block_id.clone())
                .or_insert_with(|| self.blocks[&m.block_id].clone());
        }
        Dataset {
            blocks,
            measurements,
        }
    }

    /// Same blocks, new timings (one per measurement, in order).
    pub fn relabel(&self, timings: &[f64]) -> Result<Dataset, DatasetError> {
        let measurements = self
            .measurements
            .iter()
            .zip(timings)
            .map(|(m, &timing)| Measurement {
                block_id: m.block_id.clone(),
                timing,
            })
            .collect();
        Dataset::new(self.blocks.values().cloned().collect(), measurements)
    }
}

/// Sorted, deduplicated opcodes over every block of the dataset.
pub fn opcode_vocabulary(d: &Dataset) -> Vec<String> {
    let mut ops: Vec<String> = d
        .blocks()
        .flat_map(|b| b.instructions.iter().map(|i| i.opcode.clone()))
        .collect();
    ops.sort();
    ops.dedup();
    ops
}

/// Sorted, deduplicated memory ids over every block of the dataset.
pub fn memory_ids(d: &Dataset) -> Vec<String> {
    let mut ids: Vec<String> = d
        .blocks()
        .flat_map(|b| {
            b.instructions
                .iter()
                .flat_map(|i| i.load.iter().chain(i.store.iter()).cloned())
        })
        .collect();
    ids.sort();
    ids.dedup();
    ids
}

/// Sizes of an 80/10/10 split of `n` items using largest-remainder rounding.
/// Ties in the remainder go to the earlier part.
pub fn split_sizes(n: usize) -> [usize; 3] {
    const SHARES: [usize; 3] = [8, 1, 1];
    let mut sizes = SHARES.map(|s| n * s / 10);
    let mut rems = SHARES.map(|s| n * s % 10);
    let mut left = n - sizes.iter().sum::<usize>();
    while left > 0 {
        let (best, _) = rems
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
        sizes[best] += 1;
        rems[best] = 0;
        left -= 1;
    }
    sizes
}

/// Randomly splits measurements 80/10/10 into train, validation and test.
///
/// Measurements of identical blocks (same instruction sequence) always land in
/// the same part, so the parts are block-wise disjoint. With one measurement
/// per distinct block the part sizes are exactly [`split_sizes`].
pub fn split_dataset(d: &Dataset, seed: u64) -> Result<(Dataset, Dataset, Dataset), DatasetError> {
    let n = d.len();
    if n < 10 {
        return Err(DatasetError::TooSmall(n));
    }
    let mut groups: BTreeMap<&[Instruction], Vec<usize>> = BTreeMap::new();
    for (i, m) in d.measurements.iter().enumerate() {
        groups
            .entry(&d.blocks[&m.block_id].instructions[..])
            .or_default()
            .push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    groups.shuffle(&mut crate::seeded_rng(seed));

    let targets = split_sizes(n);
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut part = 0;
    for g in groups {
        while part < 2 && parts[part].len() >= targets[part] {
            part += 1;
        }
        parts[part].extend(g);
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    let [train, valid, test] = parts;
    Ok((d.select(&train), d.select(&valid), d.select(&test)))
}
