//! The differentiable surrogate: a stacked-LSTM basic-block model that also
//! reads the simulator's parameters.
//!
//! Each instruction becomes a token sequence (opcode, source registers,
//! optional load marker, destination registers, optional store marker) that a
//! token-level LSTM stack folds into one vector. That vector is concatenated
//! with the instruction's parameter features (its 15-entry opcode row followed
//! by the two globals) and fed to an instruction-level LSTM stack, whose final
//! state goes through a linear head to predict cycles per iteration.

mod model;
mod tokens;

pub use model::{Surrogate, SurrogateError, TableInput, TABLE_STORE, WEIGHTS_STORE};
pub use tokens::TokenVocab;

use alloc::vec::Vec;

use crate::dataset::BasicBlock;
use crate::math;
use crate::params::{IntTable, ParamFamily, ParamSpec, GLOBAL_WIDTH, ROW_WIDTH};

/// Parameter features per instruction: the opcode row then the globals.
pub const FEATURE_WIDTH: usize = ROW_WIDTH + GLOBAL_WIDTH;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SurrogateConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// LSTMs per stack.
    pub depth: usize,
}

impl SurrogateConfig {
    /// Four stacked LSTMs per level.
    pub fn deep() -> Self {
        SurrogateConfig {
            depth: 4,
            ..SurrogateConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.depth == 0 {
            return Err(SurrogateError::InvalidConfig);
        }
        Ok(())
    }
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            embed_dim: 32,
            hidden_dim: 64,
            depth: 2,
        }
    }
}

/// Multiplier applied to each feature: one over the upper end of the
/// family's sampling range.
pub fn feature_scale() -> [f64; FEATURE_WIDTH] {
    let mut s = [0.0; FEATURE_WIDTH];
    for (i, v) in s.iter_mut().enumerate().take(ROW_WIDTH) {
        *v = 1.0 / f64::from(ParamSpec::for_family(ParamFamily::of_row_index(i)).sample_hi);
    }
    for g in 0..GLOBAL_WIDTH {
        s[ROW_WIDTH + g] = 1.0 / f64::from(ParamSpec::for_family(ParamFamily::of_global_index(g)).sample_hi);
    }
    s
}

/// Features of one instruction from its integer row and the globals: each
/// value minus its lower bound, then scaled.
pub fn row_features(row: &[u32; ROW_WIDTH], globals: [u32; GLOBAL_WIDTH]) -> [f64; FEATURE_WIDTH] {
    let scale = feature_scale();
    let mut f = [0.0; FEATURE_WIDTH];
    for (i, &v) in row.iter().enumerate() {
        let lb = ParamFamily::of_row_index(i).lower_bound();
        f[i] = f64::from(v.saturating_sub(lb)) * scale[i];
    }
    for (g, &v) in globals.iter().enumerate() {
        let lb = ParamFamily::of_global_index(g).lower_bound();
        f[ROW_WIDTH + g] = f64::from(v.saturating_sub(lb)) * scale[ROW_WIDTH + g];
    }
    f
}

/// [`row_features`] of every instruction of `block` under an integer table.
pub fn fixed_features(table: &IntTable, block: &BasicBlock) -> Result<Vec<[f64; FEATURE_WIDTH]>, SurrogateError> {
    let globals = table.globals();
    block
        .instructions
        .iter()
        .map(|inst| {
            let row = table
                .row(&inst.opcode)
                .ok_or_else(|| SurrogateError::UnknownOpcode(inst.opcode.clone()))?
                .to_row();
            Ok(row_features(&row, globals))
        })
        .collect()
}

/// Per-example loss: `|prediction − target| / target`.
pub fn loss(prediction: f64, target: f64) -> Result<f64, SurrogateError> {
    if !(target > 0.0) {
        return Err(SurrogateError::NonPositiveTarget(target));
    }
    Ok(math::abs(prediction - target) / target)
}

#[cfg(test)]
mod tests;

pub use model::EncodedBlock;

use crate::autodiff::{ParamStore, Tensor};
use crate::params::{RealTable, TableError, TableLayout};

/// Lays a relaxed table out as the two tensors [`TABLE_STORE`] expects.
pub fn table_store(layout: &TableLayout, table: &RealTable) -> Result<ParamStore, TableError> {
    let (rows, globals) = layout.flatten(table)?;
    let mut s = ParamStore::new();
    s.push(
        "opcode_params",
        Tensor::new(alloc::vec![layout.len(), ROW_WIDTH], rows).expect("layout shape"),
    );
    s.push("global_params", Tensor::vector(globals.to_vec()));
    Ok(s)
}

/// Inverse of [`table_store`].
pub fn table_from_store(layout: &TableLayout, store: &ParamStore) -> RealTable {
    let g = store.get(1).data();
    layout.unflatten(store.get(0).data(), [g[0], g[1]])
}
