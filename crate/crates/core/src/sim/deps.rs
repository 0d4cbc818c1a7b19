//! Use-def dependencies over an unrolled block.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::BasicBlock;
use crate::params::{OpcodeParams, NUM_READ_ADVANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepKind {
    /// Register read-after-write.
    Register,
    /// Store followed by a load of the same memory id.
    MemoryData,
    /// Store→store or load→store ordering on the same memory id. These carry
    /// no latency; the consumer only has to issue no earlier than the producer.
    MemoryOrder,
}

/// Edge between two dynamic instructions of the unrolled sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dependency {
    pub producer: usize,
    pub consumer: usize,
    /// ReadAdvance slot of the consumer used to shorten the producer's latency.
    pub slot: usize,
    pub kind: DepKind,
}

/// Slot of the `position`-th read operand.
#[inline]
pub fn operand_slot(position: usize) -> usize {
    position.min(NUM_READ_ADVANCE - 1)
}

/// Producer latency as seen by `consumer` through `slot`, clipped at zero.
pub fn effective_latency(producer: &OpcodeParams<u32>, consumer: &OpcodeParams<u32>, slot: usize) -> u32 {
    producer
        .write_latency
        .saturating_sub(consumer.read_advance[operand_slot(slot)])
}

/// Builds the dependence edges of `block` replicated `iterations` times.
///
/// Dynamic instruction `k` is `block.instructions[k % block.len()]`. Edges are
/// emitted grouped by consumer in increasing order. A register read depends on
/// the nearest earlier writer of that register; memory operands with equal ids
/// are ordered store→load, store→store and load→store. A memory load uses the
/// slot right after the register reads.
pub fn build_dependencies(block: &BasicBlock, iterations: usize) -> Vec<Dependency> {
    let len = block.len();
    let mut mem_index: BTreeMap<&str, usize> = BTreeMap::new();
    for inst in &block.instructions {
        for id in inst.load.iter().chain(inst.store.iter()) {
            let next = mem_index.len();
            mem_index.entry(id.as_str()).or_insert(next);
        }
    }
    let load_ids: Vec<Option<usize>> = block
        .instructions
        .iter()
        .map(|i| i.load.as_deref().map(|m| mem_index[m]))
        .collect();
    let store_ids: Vec<Option<usize>> = block
        .instructions
        .iter()
        .map(|i| i.store.as_deref().map(|m| mem_index[m]))
        .collect();

    let max_reg = block
        .instructions
        .iter()
        .flat_map(|i| i.writes.iter().chain(i.reads.iter()))
        .copied()
        .max()
        .map_or(0, |r| r as usize + 1);
    let mut last_writer: Vec<Option<usize>> = vec![None; max_reg];
    let mut last_store: Vec<Option<usize>> = vec![None; mem_index.len()];
    let mut loads_since_store: Vec<Vec<usize>> = vec![Vec::new(); mem_index.len()];

    let mut edges = Vec::new();
    for k in 0..len * iterations {
        let s = k % len;
        let inst = &block.instructions[s];
        for (pos, &r) in inst.reads.iter().enumerate() {
            if let Some(p) = last_writer[r as usize] {
                edges.push(Dependency {
                    producer: p,
                    consumer: k,
                    slot: operand_slot(pos),
                    kind: DepKind::Register,
                });
            }
        }
        if let Some(m) = load_ids[s] {
            if let Some(p) = last_store[m] {
                edges.push(Dependency {
                    producer: p,
                    consumer: k,
                    slot: operand_slot(inst.reads.len()),
                    kind: DepKind::MemoryData,
                });
            }
        }
        if let Some(m) = store_ids[s] {
            if let Some(p) = last_store[m] {
                edges.push(Dependency {
                    producer: p,
                    consumer: k,
                    slot: 0,
                    kind: DepKind::MemoryOrder,
                });
            }
            for &p in &loads_since_store[m] {
                edges.push(Dependency {
                    producer: p,
                    consumer: k,
                    slot: 0,
                    kind: DepKind::MemoryOrder,
                });
            }
        }
        for &w in &inst.writes {
            last_writer[w as usize] = Some(k);
        }
        if let Some(m) = store_ids[s] {
            last_store[m] = Some(k);
            loads_since_store[m].clear();
        } else if let Some(m) = load_ids[s] {
            loads_since_store[m].push(k);
        }
    }
    edges
}
