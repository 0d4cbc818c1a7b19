use alloc::collections::BTreeMap;
use alloc::string::String;

use rand::seq::index;
use rand::Rng;

use crate::params::{IntTable, OpcodeParams, ParamFamily, ParamSpec, ParameterTable, NUM_PORTS, NUM_READ_ADVANCE};

/// Distributions tables are drawn from. Each entry is an inclusive integer
/// range sampled uniformly; for the port map, `max_ports` bounds how many
/// distinct ports get a draw from `port_cycles` (others stay 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingSpec {
    pub dispatch_width: (u32, u32),
    pub reorder_buffer_size: (u32, u32),
    pub num_micro_ops: (u32, u32),
    pub write_latency: (u32, u32),
    pub read_advance: (u32, u32),
    pub max_ports: usize,
    pub port_cycles: (u32, u32),
}

impl Default for SamplingSpec {
    fn default() -> Self {
        let r = |f| {
            let s = ParamSpec::for_family(f);
            (s.sample_lo, s.sample_hi)
        };
        SamplingSpec {
            dispatch_width: r(ParamFamily::DispatchWidth),
            reorder_buffer_size: r(ParamFamily::ReorderBufferSize),
            num_micro_ops: r(ParamFamily::NumMicroOps),
            write_latency: r(ParamFamily::WriteLatency),
            read_advance: r(ParamFamily::ReadAdvanceCycles),
            max_ports: 2,
            port_cycles: r(ParamFamily::PortMap),
        }
    }
}

impl SamplingSpec {
    /// Inclusive range drawn for `family`.
    pub fn range(&self, family: ParamFamily) -> (u32, u32) {
        match family {
            ParamFamily::DispatchWidth => self.dispatch_width,
            ParamFamily::ReorderBufferSize => self.reorder_buffer_size,
            ParamFamily::NumMicroOps => self.num_micro_ops,
            ParamFamily::WriteLatency => self.write_latency,
            ParamFamily::ReadAdvanceCycles => self.read_advance,
            ParamFamily::PortMap => self.port_cycles,
        }
    }

    pub fn sample_row(&self, rng: &mut impl Rng) -> OpcodeParams<u32> {
        let mut port_map = [0; NUM_PORTS];
        let k = rng.gen_range(0..=self.max_ports.min(NUM_PORTS));
        for p in index::sample(rng, NUM_PORTS, k) {
            port_map[p] = rng.gen_range(self.port_cycles.0..=self.port_cycles.1);
        }
        let num_micro_ops = rng.gen_range(self.num_micro_ops.0..=self.num_micro_ops.1);
        let write_latency = rng.gen_range(self.write_latency.0..=self.write_latency.1);
        let mut read_advance = [0; NUM_READ_ADVANCE];
        for v in &mut read_advance {
            *v = rng.gen_range(self.read_advance.0..=self.read_advance.1);
        }
        OpcodeParams {
            num_micro_ops,
            write_latency,
            read_advance,
            port_map,
        }
    }
}

/// Draws a fresh table covering `opcodes`.
pub fn sample_parameter_table(spec: &SamplingSpec, opcodes: &[String], rng: &mut impl Rng) -> IntTable {
    let dispatch_width = rng.gen_range(spec.dispatch_width.0..=spec.dispatch_width.1);
    let reorder_buffer_size = rng.gen_range(spec.reorder_buffer_size.0..=spec.reorder_buffer_size.1);
    let rows: BTreeMap<String, OpcodeParams<u32>> = opcodes
        .iter()
        .map(|op| (op.clone(), spec.sample_row(rng)))
        .collect();
    ParameterTable {
        dispatch_width,
        reorder_buffer_size,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::vec::Vec;

    fn ops(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("OP{i}")).collect()
    }

    #[test]
    fn write_latency_mean_matches_uniform() {
        let mut rng = crate::seeded_rng(1);
        let spec = SamplingSpec::default();
        let ops = ops(1);
        let n = 10_000;
        let sum: u32 = (0..n)
            .map(|_| sample_parameter_table(&spec, &ops, &mut rng).rows["OP0"].write_latency)
            .sum();
        let mean = f64::from(sum) / f64::from(n);
        assert!((mean - 2.5).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn draws_are_legal() {
        let mut rng = crate::seeded_rng(2);
        let spec = SamplingSpec::default();
        let ops = ops(3);
        let mut port_counts = [0usize; 3];
        for _ in 0..2000 {
            let t = sample_parameter_table(&spec, &ops, &mut rng);
            t.validate().unwrap();
            assert!((1..=10).contains(&t.dispatch_width));
            assert!((50..=250).contains(&t.reorder_buffer_size));
            for row in t.rows.values() {
                let nz = row.port_map.iter().filter(|&&c| c > 0).count();
                assert!(nz <= 2);
                assert!(row.port_map.iter().all(|&c| c <= 2));
                assert!((1..=10).contains(&row.num_micro_ops));
                assert!(row.read_advance.iter().all(|&c| c <= 5));
                port_counts[nz] += 1;
            }
        }
        // Every nonzero-port count occurs.
        assert!(port_counts.iter().all(|&c| c > 0));
    }

    #[test]
    fn seeded_draws_repeat() {
        let spec = SamplingSpec::default();
        let ops = ops(5);
        let a = sample_parameter_table(&spec, &ops, &mut crate::seeded_rng(9));
        let b = sample_parameter_table(&spec, &ops, &mut crate::seeded_rng(9));
        assert_eq!(a, b);
    }
}
