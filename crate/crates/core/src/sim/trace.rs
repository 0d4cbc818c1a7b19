//! Per-cycle event hook for the pipeline simulator.

use alloc::vec::Vec;

use crate::params::NUM_PORTS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    /// The last micro-op of dynamic instruction `index` was dispatched.
    Dispatch { cycle: u64, index: usize },
    /// `index` issued and reserved `ports[p]` cycles of each port `p`.
    Issue {
        cycle: u64,
        index: usize,
        ports: [u32; NUM_PORTS],
    },
    Retire { cycle: u64, index: usize },
    /// Micro-ops resident in the reorder buffer at the end of `cycle`.
    CycleEnd { cycle: u64, rob_occupancy: u32 },
}

pub trait TraceSink {
    fn event(&mut self, event: TraceEvent);
}

/// Discards every event.
impl TraceSink for () {
    #[inline(always)]
    fn event(&mut self, _event: TraceEvent) {}
}

impl TraceSink for Vec<TraceEvent> {
    fn event(&mut self, event: TraceEvent) {
        self.push(event);
    }
}

/// Violation found by [`check_trace`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceViolation {
    RobOverflow { cycle: u64, occupancy: u32 },
    PortConflict { cycle: u64, port: usize, first: usize, second: usize },
}

/// Checks reorder-buffer capacity and port exclusivity over a trace.
pub fn check_trace(events: &[TraceEvent], rob_size: u32) -> Result<(), TraceViolation> {
    // (busy_until, holder) per port
    let mut ports: [(u64, usize); NUM_PORTS] = [(0, usize::MAX); NUM_PORTS];
    for ev in events {
        match *ev {
            TraceEvent::CycleEnd { cycle, rob_occupancy } if rob_occupancy > rob_size => {
                return Err(TraceViolation::RobOverflow {
                    cycle,
                    occupancy: rob_occupancy,
                });
            }
            TraceEvent::Issue { cycle, index, ports: use_ } => {
                for (p, &n) in use_.iter().enumerate() {
                    if n == 0 {
                        continue;
                    }
                    if ports[p].0 > cycle {
                        return Err(TraceViolation::PortConflict {
                            cycle,
                            port: p,
                            first: ports[p].1,
                            second: index,
                        });
                    }
                    ports[p] = (cycle + u64::from(n), index);
                }
            }
            _ => {}
        }
    }
    Ok(())
}
