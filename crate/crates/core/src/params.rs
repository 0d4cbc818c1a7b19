//! Simulator parameters.
//!
//! A [`ParameterTable`] holds the two global parameters and one row of
//! per-opcode parameters for every opcode in the vocabulary. The integer form
//! (`ParameterTable<u32>`) is what the simulator consumes. The continuous form
//! (`ParameterTable<f64>`) is what gradient descent updates: each entry there
//! is a relaxed offset from the family's lower bound, and extraction maps it
//! back with `round(|v|) + lower_bound`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

/// Number of execution ports.
pub const NUM_PORTS: usize = 10;
/// ReadAdvanceCycles entries per opcode.
pub const NUM_READ_ADVANCE: usize = 3;
/// Width of one per-opcode row: uops, latency, read advance, port map.
pub const ROW_WIDTH: usize = 2 + NUM_READ_ADVANCE + NUM_PORTS;
/// Global parameters: dispatch width and reorder buffer size.
pub const GLOBAL_WIDTH: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamFamily {
    DispatchWidth,
    ReorderBufferSize,
    NumMicroOps,
    WriteLatency,
    ReadAdvanceCycles,
    PortMap,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Global,
    PerOpcode,
}

impl ParamFamily {
    pub const ALL: [ParamFamily; 6] = [
        ParamFamily::DispatchWidth,
        ParamFamily::ReorderBufferSize,
        ParamFamily::NumMicroOps,
        ParamFamily::WriteLatency,
        ParamFamily::ReadAdvanceCycles,
        ParamFamily::PortMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamFamily::DispatchWidth => "dispatch_width",
            ParamFamily::ReorderBufferSize => "reorder_buffer_size",
            ParamFamily::NumMicroOps => "num_micro_ops",
            ParamFamily::WriteLatency => "write_latency",
            ParamFamily::ReadAdvanceCycles => "read_advance",
            ParamFamily::PortMap => "port_map",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        ParamFamily::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn scope(self) -> Scope {
        match self {
            ParamFamily::DispatchWidth | ParamFamily::ReorderBufferSize => Scope::Global,
            _ => Scope::PerOpcode,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            ParamFamily::ReadAdvanceCycles => NUM_READ_ADVANCE,
            ParamFamily::PortMap => NUM_PORTS,
            _ => 1,
        }
    }

    pub fn lower_bound(self) -> u32 {
        match self {
            ParamFamily::DispatchWidth
            | ParamFamily::ReorderBufferSize
            | ParamFamily::NumMicroOps => 1,
            _ => 0,
        }
    }

    /// Family of the entry at `index` within a per-opcode row.
    pub fn of_row_index(index: usize) -> ParamFamily {
        match index {
            0 => ParamFamily::NumMicroOps,
            1 => ParamFamily::WriteLatency,
            i if i < 2 + NUM_READ_ADVANCE => ParamFamily::ReadAdvanceCycles,
            _ => ParamFamily::PortMap,
        }
    }

    /// Family of the entry at `index` within the global vector.
    pub fn of_global_index(index: usize) -> ParamFamily {
        if index == 0 {
            ParamFamily::DispatchWidth
        } else {
            ParamFamily::ReorderBufferSize
        }
    }
}

/// Metadata of one parameter family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub family: ParamFamily,
    pub scope: Scope,
    pub arity: usize,
    pub lower_bound: u32,
    pub integer_valued: bool,
    /// Inclusive sampling range.
    pub sample_lo: u32,
    pub sample_hi: u32,
}

impl ParamSpec {
    pub fn for_family(family: ParamFamily) -> ParamSpec {
        let (sample_lo, sample_hi) = match family {
            ParamFamily::DispatchWidth => (1, 10),
            ParamFamily::ReorderBufferSize => (50, 250),
            ParamFamily::NumMicroOps => (1, 10),
            ParamFamily::WriteLatency => (0, 5),
            ParamFamily::ReadAdvanceCycles => (0, 5),
            ParamFamily::PortMap => (0, 2),
        };
        ParamSpec {
            family,
            scope: family.scope(),
            arity: family.arity(),
            lower_bound: family.lower_bound(),
            integer_valued: true,
            sample_lo,
            sample_hi,
        }
    }

    pub fn all() -> [ParamSpec; 6] {
        ParamFamily::ALL.map(ParamSpec::for_family)
    }
}

/// Per-opcode parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpcodeParams<T> {
    pub num_micro_ops: T,
    pub write_latency: T,
    pub read_advance: [T; NUM_READ_ADVANCE],
    pub port_map: [T; NUM_PORTS],
}

impl<T: Copy> OpcodeParams<T> {
    /// Flattened in the order uops, latency, read advance, port map.
    pub fn to_row(&self) -> [T; ROW_WIDTH] {
        let mut row = [self.num_micro_ops; ROW_WIDTH];
        row[1] = self.write_latency;
        row[2..2 + NUM_READ_ADVANCE].copy_from_slice(&self.read_advance);
        row[2 + NUM_READ_ADVANCE..].copy_from_slice(&self.port_map);
        row
    }

    pub fn from_row(row: &[T; ROW_WIDTH]) -> Self {
        let mut read_advance = [row[2]; NUM_READ_ADVANCE];
        read_advance.copy_from_slice(&row[2..2 + NUM_READ_ADVANCE]);
        let mut port_map = [row[0]; NUM_PORTS];
        port_map.copy_from_slice(&row[2 + NUM_READ_ADVANCE..]);
        OpcodeParams {
            num_micro_ops: row[0],
            write_latency: row[1],
            read_advance,
            port_map,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ParamFamily, T) -> U) -> OpcodeParams<U> {
        OpcodeParams {
            num_micro_ops: f(ParamFamily::NumMicroOps, self.num_micro_ops),
            write_latency: f(ParamFamily::WriteLatency, self.write_latency),
            read_advance: self.read_advance.map(|v| f(ParamFamily::ReadAdvanceCycles, v)),
            port_map: self.port_map.map(|v| f(ParamFamily::PortMap, v)),
        }
    }
}

impl OpcodeParams<u32> {
    /// Cycles between issue and completion.
    pub fn completion_delay(&self) -> u32 {
        let busiest = self.port_map.iter().copied().max().unwrap_or(0);
        1.max(self.write_latency).max(busiest)
    }
}

/// Global parameters plus one row per opcode.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTable<T> {
    pub dispatch_width: T,
    pub reorder_buffer_size: T,
    pub rows: BTreeMap<String, OpcodeParams<T>>,
}

/// Integer (extracted) form, consumed by the simulator.
pub type IntTable = ParameterTable<u32>;
/// Continuous (relaxed) form, updated by gradient descent.
pub type RealTable = ParameterTable<f64>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("{family} must be at least {bound}, got {value} ({context})")]
    BelowLowerBound {
        family: &'static str,
        bound: u32,
        value: u32,
        context: String,
    },
    #[error("opcode {0:?} missing from the parameter table")]
    MissingOpcode(String),
}

impl<T: Copy> ParameterTable<T> {
    pub fn row(&self, opcode: &str) -> Option<&OpcodeParams<T>> {
        self.rows.get(opcode)
    }

    pub fn opcodes(&self) -> impl Iterator<Item = &str> {
        self.rows.keys().map(String::as_str)
    }

    pub fn globals(&self) -> [T; GLOBAL_WIDTH] {
        [self.dispatch_width, self.reorder_buffer_size]
    }

    pub fn map<U>(&self, mut f: impl FnMut(ParamFamily, T) -> U) -> ParameterTable<U> {
        ParameterTable {
            dispatch_width: f(ParamFamily::DispatchWidth, self.dispatch_width),
            reorder_buffer_size: f(ParamFamily::ReorderBufferSize, self.reorder_buffer_size),
            rows: self
                .rows
                .iter()
                .map(|(k, r)| (k.clone(), r.map(&mut f)))
                .collect(),
        }
    }
}

impl IntTable {
    /// Checks the integer-form lower bounds.
    pub fn validate(&self) -> Result<(), TableError> {
        let check = |family: ParamFamily, value: u32, context: &str| {
            let bound = family.lower_bound();
            if value < bound {
                Err(TableError::BelowLowerBound {
                    family: family.name(),
                    bound,
                    value,
                    context: context.into(),
                })
            } else {
                Ok(())
            }
        };
        check(ParamFamily::DispatchWidth, self.dispatch_width, "global")?;
        check(ParamFamily::ReorderBufferSize, self.reorder_buffer_size, "global")?;
        for (op, row) in &self.rows {
            check(ParamFamily::NumMicroOps, row.num_micro_ops, op)?;
        }
        Ok(())
    }

    /// Continuous form: each entry becomes its offset from the lower bound.
    pub fn relax(&self) -> RealTable {
        self.map(|family, v| f64::from(v) - f64::from(family.lower_bound()))
    }
}

/// Fixed opcode order used to lay a table out as dense arrays.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableLayout {
    opcodes: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl TableLayout {
    pub fn new(opcodes: Vec<String>) -> Self {
        let index = opcodes
            .iter()
            .enumerate()
            .map(|(i, o)| (o.clone(), i))
            .collect();
        TableLayout { opcodes, index }
    }

    pub fn opcodes(&self) -> &[String] {
        &self.opcodes
    }

    pub fn len(&self) -> usize {
        self.opcodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opcodes.is_empty()
    }

    pub fn index_of(&self, opcode: &str) -> Option<usize> {
        self.index.get(opcode).copied()
    }

    /// Row-major `[len, ROW_WIDTH]` values plus the global vector.
    pub fn flatten<T: Copy>(&self, table: &ParameterTable<T>) -> Result<(Vec<T>, [T; GLOBAL_WIDTH]), TableError> {
        let mut rows = Vec::with_capacity(self.len() * ROW_WIDTH);
        for op in &self.opcodes {
            let row = table
                .row(op)
                .ok_or_else(|| TableError::MissingOpcode(op.clone()))?;
            rows.extend_from_slice(&row.to_row());
        }
        Ok((rows, table.globals()))
    }

    pub fn unflatten<T: Copy>(&self, rows: &[T], globals: [T; GLOBAL_WIDTH]) -> ParameterTable<T> {
        assert_eq!(rows.len(), self.len() * ROW_WIDTH, "row buffer does not match layout");
        let rows = self
            .opcodes
            .iter()
            .zip(rows.chunks_exact(ROW_WIDTH))
            .map(|(op, chunk)| {
                let arr: &[T; ROW_WIDTH] = chunk.try_into().expect("chunk width");
                (op.clone(), OpcodeParams::from_row(arr))
            })
            .collect();
        ParameterTable {
            dispatch_width: globals[0],
            reorder_buffer_size: globals[1],
            rows,
        }
    }
}
