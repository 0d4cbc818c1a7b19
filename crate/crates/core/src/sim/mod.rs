//! Out-of-order superscalar basic-block simulator.
//!
//! The block is unrolled `iterations` times and pushed through four stages:
//!
//! - **dispatch**: in program order, at most `dispatch_width` micro-ops per
//!   cycle. An instruction needs all of its micro-ops' reorder-buffer slots
//!   free before its first micro-op dispatches, may span several cycles, and
//!   finishes dispatch on the cycle its last micro-op goes.
//! - **issue**: unlimited width, oldest first. An instruction issues at the
//!   first cycle at or after its dispatch cycle where every producer issued at
//!   least the effective latency earlier (zero allows the same cycle) and
//!   every port it uses is free. Issuing reserves port `p` for `port_map[p]`
//!   consecutive cycles.
//! - **execute**: completion is `issue + max(1, write_latency, max port_map)`.
//! - **retire**: in order, unbounded width, at the first cycle at or after
//!   completion. Reorder-buffer slots are freed at retirement and can be
//!   reused by dispatch in the same cycle.
//!
//! Cycles are numbered from zero and the total is the retirement cycle of the
//! last instruction.

mod deps;
pub mod trace;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub use deps::{build_dependencies, effective_latency, operand_slot, DepKind, Dependency};
pub use trace::{check_trace, TraceEvent, TraceSink, TraceViolation};

use crate::dataset::BasicBlock;
use crate::params::{IntTable, OpcodeParams, NUM_PORTS};

/// Iterations used for every reported timing.
pub const DEFAULT_ITERATIONS: u32 = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimResult {
    pub cycles_per_iteration: f64,
    pub total_cycles: u64,
    pub iterations: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown opcode {0:?}")]
    UnknownOpcode(String),
    #[error("unschedulable: {opcode} needs {uops} micro-ops but the reorder buffer holds {rob}")]
    Unschedulable { opcode: String, uops: u32, rob: u32 },
    #[error("invalid table: {0}")]
    InvalidTable(&'static str),
    #[error("iterations must be at least 1")]
    NoIterations,
}

/// A parameterized timing model of basic blocks.
pub trait Simulator: Sync {
    fn simulate(&self, table: &IntTable, block: &BasicBlock) -> Result<SimResult, SimError>;
}

impl<T: Simulator + ?Sized> Simulator for &T {
    fn simulate(&self, table: &IntTable, block: &BasicBlock) -> Result<SimResult, SimError> {
        (**self).simulate(table, block)
    }
}

/// The pipeline model described in the module docs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PipelineSimulator {
    pub iterations: u32,
}

impl Default for PipelineSimulator {
    fn default() -> Self {
        PipelineSimulator {
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

impl Simulator for PipelineSimulator {
    fn simulate(&self, table: &IntTable, block: &BasicBlock) -> Result<SimResult, SimError> {
        simulate(table, block, self.iterations)
    }
}

/// Counts calls to an inner simulator.
#[derive(Debug, Default)]
pub struct CountingSimulator<S> {
    pub inner: S,
    calls: AtomicU64,
}

impl<S> CountingSimulator<S> {
    pub fn new(inner: S) -> Self {
        CountingSimulator {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl<S: Simulator> Simulator for CountingSimulator<S> {
    fn simulate(&self, table: &IntTable, block: &BasicBlock) -> Result<SimResult, SimError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.simulate(table, block)
    }
}

pub fn simulate(table: &IntTable, block: &BasicBlock, iterations: u32) -> Result<SimResult, SimError> {
    simulate_traced(table, block, iterations, &mut ())
}

const NOT_ISSUED: u64 = u64::MAX;

/// [`simulate`] reporting every dispatch, issue and retire to `sink`.
pub fn simulate_traced<S: TraceSink>(
    table: &IntTable,
    block: &BasicBlock,
    iterations: u32,
    sink: &mut S,
) -> Result<SimResult, SimError> {
    if iterations == 0 {
        return Err(SimError::NoIterations);
    }
    let dispatch_width = table.dispatch_width;
    let rob_size = table.reorder_buffer_size;
    if dispatch_width == 0 {
        return Err(SimError::InvalidTable("dispatch_width must be at least 1"));
    }
    if rob_size == 0 {
        return Err(SimError::InvalidTable("reorder_buffer_size must be at least 1"));
    }
    let rows: Vec<&OpcodeParams<u32>> = block
        .instructions
        .iter()
        .map(|i| {
            table
                .row(&i.opcode)
                .ok_or_else(|| SimError::UnknownOpcode(i.opcode.clone()))
        })
        .collect::<Result<_, _>>()?;
    for (inst, row) in block.instructions.iter().zip(&rows) {
        if row.num_micro_ops == 0 {
            return Err(SimError::InvalidTable("num_micro_ops must be at least 1"));
        }
        if row.num_micro_ops > rob_size {
            return Err(SimError::Unschedulable {
                opcode: inst.opcode.clone(),
                uops: row.num_micro_ops,
                rob: rob_size,
            });
        }
    }

    let len = block.len();
    let n = len * iterations as usize;
    let delays: Vec<u64> = rows.iter().map(|r| u64::from(r.completion_delay())).collect();

    // Producer lists in CSR form, indexed by consumer.
    let edges = build_dependencies(block, iterations as usize);
    let mut dep_start = vec![0usize; n + 1];
    for e in &edges {
        dep_start[e.consumer + 1] += 1;
    }
    for k in 0..n {
        dep_start[k + 1] += dep_start[k];
    }
    let dep_producer: Vec<usize> = edges.iter().map(|e| e.producer).collect();
    let dep_latency: Vec<u64> = edges
        .iter()
        .map(|e| match e.kind {
            DepKind::MemoryOrder => 0,
            DepKind::Register | DepKind::MemoryData => u64::from(effective_latency(
                rows[e.producer % len],
                rows[e.consumer % len],
                e.slot,
            )),
        })
        .collect();

    let mut issue = vec![NOT_ISSUED; n];
    let mut complete = vec![0u64; n];
    let mut port_free_at = [0u64; NUM_PORTS];
    let mut waiting: Vec<usize> = Vec::new();
    let mut next_dispatch = 0usize;
    let mut pending_uops = 0u32;
    let mut rob_used = 0u32;
    let mut retired = 0usize;
    let mut cycle = 0u64;

    loop {
        let mut progressed = false;

        while retired < n && issue[retired] != NOT_ISSUED && complete[retired] <= cycle {
            rob_used -= rows[retired % len].num_micro_ops;
            sink.event(TraceEvent::Retire { cycle, index: retired });
            retired += 1;
            progressed = true;
        }
        if retired == n {
            break;
        }

        let mut bandwidth = dispatch_width;
        while bandwidth > 0 && next_dispatch < n {
            if pending_uops == 0 {
                let uops = rows[next_dispatch % len].num_micro_ops;
                if rob_used + uops > rob_size {
                    break;
                }
                rob_used += uops;
                pending_uops = uops;
            }
            let take = bandwidth.min(pending_uops);
            pending_uops -= take;
            bandwidth -= take;
            progressed = true;
            if pending_uops == 0 {
                sink.event(TraceEvent::Dispatch {
                    cycle,
                    index: next_dispatch,
                });
                waiting.push(next_dispatch);
                next_dispatch += 1;
            }
        }

        let mut kept = 0;
        for w in 0..waiting.len() {
            let idx = waiting[w];
            let row = rows[idx % len];
            let deps_ready = (dep_start[idx]..dep_start[idx + 1]).all(|e| {
                let p = issue[dep_producer[e]];
                p != NOT_ISSUED && p + dep_latency[e] <= cycle
            });
            let ports_free = row
                .port_map
                .iter()
                .zip(&port_free_at)
                .all(|(&busy, &free)| busy == 0 || free <= cycle);
            if deps_ready && ports_free {
                issue[idx] = cycle;
                complete[idx] = cycle + delays[idx % len];
                for (p, &busy) in row.port_map.iter().enumerate() {
                    if busy > 0 {
                        port_free_at[p] = cycle + u64::from(busy);
                    }
                }
                sink.event(TraceEvent::Issue {
                    cycle,
                    index: idx,
                    ports: row.port_map,
                });
                progressed = true;
            } else {
                waiting[kept] = idx;
                kept += 1;
            }
        }
        waiting.truncate(kept);

        sink.event(TraceEvent::CycleEnd {
            cycle,
            rob_occupancy: rob_used,
        });

        if progressed {
            cycle += 1;
            continue;
        }
        // Nothing moved: jump to the next cycle where something can.
        let mut next = u64::MAX;
        if issue[retired] != NOT_ISSUED {
            next = next.min(complete[retired]);
        }
        for &idx in &waiting {
            let mut ready = 0u64;
            let mut blocked = false;
            for e in dep_start[idx]..dep_start[idx + 1] {
                let p = issue[dep_producer[e]];
                if p == NOT_ISSUED {
                    blocked = true;
                    break;
                }
                ready = ready.max(p + dep_latency[e]);
            }
            if blocked {
                continue;
            }
            let row = rows[idx % len];
            for (p, &busy) in row.port_map.iter().enumerate() {
                if busy > 0 {
                    ready = ready.max(port_free_at[p]);
                }
            }
            next = next.min(ready);
        }
        debug_assert!(next != u64::MAX, "simulator made no progress");
        cycle = next.max(cycle + 1);
    }

    Ok(SimResult {
        cycles_per_iteration: cycle as f64 / f64::from(iterations),
        total_cycles: cycle,
        iterations,
    })
}
