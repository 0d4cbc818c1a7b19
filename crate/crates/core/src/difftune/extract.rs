use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math;
use crate::params::{IntTable, ParamFamily, RealTable, Scope, TableLayout, ROW_WIDTH};

/// Integer table from a relaxed one: `round(|v|) + lower_bound` per entry,
/// rounding halves away from zero.
pub fn extract_parameters(table: &RealTable) -> IntTable {
    table.map(|family, v| {
        let r = math::round(math::abs(v));
        let r = if r >= f64::from(u32::MAX) { u32::MAX } else { r as u32 };
        r.saturating_add(family.lower_bound())
    })
}

/// One frozen family, for every opcode or for a single one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct FreezeEntry {
    pub family: ParamFamily,
    pub opcode: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FreezeParseError {
    #[error("unknown parameter family {0:?}")]
    UnknownFamily(String),
    #[error("{0} is a global parameter and takes no opcode")]
    GlobalWithOpcode(&'static str),
}

impl core::str::FromStr for FreezeEntry {
    type Err = FreezeParseError;

    /// `family` or `family:opcode`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (fam, op) = match s.split_once(':') {
            Some((f, o)) => (f.trim(), Some(o.trim().to_string())),
            None => (s.trim(), None),
        };
        let family = ParamFamily::from_name(fam).ok_or_else(|| FreezeParseError::UnknownFamily(fam.into()))?;
        if op.is_some() && family.scope() == Scope::Global {
            return Err(FreezeParseError::GlobalWithOpcode(family.name()));
        }
        Ok(FreezeEntry { family, opcode: op })
    }
}

impl core::fmt::Display for FreezeEntry {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match &self.opcode {
            Some(op) => write!(f, "{}:{}", self.family.name(), op),
            None => f.write_str(self.family.name()),
        }
    }
}

/// Table entries held at default values while the rest is learned.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FreezeMask {
    entries: BTreeSet<FreezeEntry>,
}

impl FreezeMask {
    pub fn none() -> Self {
        FreezeMask::default()
    }

    /// Every family frozen.
    pub fn all() -> Self {
        FreezeMask::except(&[])
    }

    /// Every family frozen except `learn`.
    pub fn except(learn: &[ParamFamily]) -> Self {
        let mut m = FreezeMask::none();
        for f in ParamFamily::ALL {
            if !learn.contains(&f) {
                m.insert(FreezeEntry { family: f, opcode: None });
            }
        }
        m
    }

    pub fn insert(&mut self, entry: FreezeEntry) {
        self.entries.insert(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &FreezeEntry> {
        self.entries.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_frozen(&self, family: ParamFamily, opcode: Option<&str>) -> bool {
        self.entries
            .iter()
            .any(|e| e.family == family && (e.opcode.is_none() || e.opcode.as_deref() == opcode))
    }

    /// Trainability per entry of a table store laid out by `layout`
    /// (`true` = learned).
    pub fn trainable(&self, layout: &TableLayout) -> Vec<Vec<bool>> {
        let mut rows = vec![true; layout.len() * ROW_WIDTH];
        for (r, op) in layout.opcodes().iter().enumerate() {
            for c in 0..ROW_WIDTH {
                rows[r * ROW_WIDTH + c] = !self.is_frozen(ParamFamily::of_row_index(c), Some(op));
            }
        }
        let globals = (0..2)
            .map(|g| !self.is_frozen(ParamFamily::of_global_index(g), None))
            .collect();
        vec![rows, globals]
    }

    /// Overwrites the frozen entries of `table` with the relaxed values of
    /// `defaults`. Opcodes missing from `defaults` are left alone.
    pub fn apply_defaults(&self, table: &mut RealTable, defaults: &IntTable) {
        let d = defaults.relax();
        if self.is_frozen(ParamFamily::DispatchWidth, None) {
            table.dispatch_width = d.dispatch_width;
        }
        if self.is_frozen(ParamFamily::ReorderBufferSize, None) {
            table.reorder_buffer_size = d.reorder_buffer_size;
        }
        for (op, row) in table.rows.iter_mut() {
            let Some(drow) = d.rows.get(op) else { continue };
            let mut cells = row.to_row();
            let dcells = drow.to_row();
            for c in 0..ROW_WIDTH {
                if self.is_frozen(ParamFamily::of_row_index(c), Some(op)) {
                    cells[c] = dcells[c];
                }
            }
            *row = crate::params::OpcodeParams::from_row(&cells);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difftune::{sample_parameter_table, SamplingSpec};
    use alloc::format;

    fn single(family: ParamFamily, v: f64) -> u32 {
        let mut t = IntTable {
            dispatch_width: 1,
            reorder_buffer_size: 1,
            rows: Default::default(),
        }
        .relax();
        let mut row = crate::params::OpcodeParams {
            num_micro_ops: 0.0,
            write_latency: 0.0,
            read_advance: [0.0; 3],
            port_map: [0.0; 10],
        };
        match family {
            ParamFamily::NumMicroOps => row.num_micro_ops = v,
            ParamFamily::WriteLatency => row.write_latency = v,
            ParamFamily::DispatchWidth => t.dispatch_width = v,
            _ => unreachable!(),
        }
        t.rows.insert("X".into(), row);
        let e = extract_parameters(&t);
        match family {
            ParamFamily::NumMicroOps => e.rows["X"].num_micro_ops,
            ParamFamily::WriteLatency => e.rows["X"].write_latency,
            _ => e.dispatch_width,
        }
    }

    #[test]
    fn rule_examples() {
        assert_eq!(single(ParamFamily::WriteLatency, -2.4), 2);
        assert_eq!(single(ParamFamily::NumMicroOps, -2.4), 3);
        assert_eq!(single(ParamFamily::WriteLatency, 0.5), 1);
        assert_eq!(single(ParamFamily::WriteLatency, -0.5), 1);
        assert_eq!(single(ParamFamily::WriteLatency, 0.49), 0);
        assert_eq!(single(ParamFamily::DispatchWidth, 0.0), 1);
        assert_eq!(single(ParamFamily::DispatchWidth, 3.6), 5);
    }

    #[test]
    fn extraction_is_idempotent_and_inverts_relax() {
        let ops: Vec<String> = (0..6).map(|i| format!("OP{i}")).collect();
        let mut rng = crate::seeded_rng(11);
        for _ in 0..50 {
            let t = sample_parameter_table(&SamplingSpec::default(), &ops, &mut rng);
            assert_eq!(extract_parameters(&t.relax()), t);
            let noisy = t.relax().map(|_, v| -v + 0.3);
            let e = extract_parameters(&noisy);
            assert_eq!(extract_parameters(&e.relax()), e);
            e.validate().unwrap();
        }
    }

    #[test]
    fn parse_and_display() {
        let e: FreezeEntry = "write_latency:ADD".parse().unwrap();
        assert_eq!(e.family, ParamFamily::WriteLatency);
        assert_eq!(e.opcode.as_deref(), Some("ADD"));
        assert_eq!(e.to_string(), "write_latency:ADD");
        let g: FreezeEntry = "dispatch_width".parse().unwrap();
        assert_eq!(g.opcode, None);
        assert!(matches!("nope".parse::<FreezeEntry>(), Err(FreezeParseError::UnknownFamily(_))));
        assert!(matches!(
            "dispatch_width:ADD".parse::<FreezeEntry>(),
            Err(FreezeParseError::GlobalWithOpcode(_))
        ));
    }

    #[test]
    fn trainable_mask_and_defaults() {
        let layout = TableLayout::new(vec!["A".into(), "B".into()]);
        let mut m = FreezeMask::none();
        m.insert("port_map".parse().unwrap());
        m.insert("write_latency:B".parse().unwrap());
        m.insert("reorder_buffer_size".parse().unwrap());
        let t = m.trainable(&layout);
        assert_eq!(t[0].len(), 2 * ROW_WIDTH);
        assert!(t[0][1]); // A latency
        assert!(!t[0][ROW_WIDTH + 1]); // B latency
        assert!(t[0][0] && !t[0][5] && !t[0][ROW_WIDTH + 14]);
        assert_eq!(t[1], vec![true, false]);

        let ops: Vec<String> = layout.opcodes().to_vec();
        let mut rng = crate::seeded_rng(3);
        let defaults = sample_parameter_table(&SamplingSpec::default(), &ops, &mut rng);
        let mut table = sample_parameter_table(&SamplingSpec::default(), &ops, &mut rng).relax();
        let before = table.clone();
        m.apply_defaults(&mut table, &defaults);
        let d = defaults.relax();
        assert_eq!(table.reorder_buffer_size, d.reorder_buffer_size);
        assert_eq!(table.dispatch_width, before.dispatch_width);
        assert_eq!(table.rows["B"].write_latency, d.rows["B"].write_latency);
        assert_eq!(table.rows["A"].write_latency, before.rows["A"].write_latency);
        assert_eq!(table.rows["A"].port_map, d.rows["A"].port_map);
    }
}
