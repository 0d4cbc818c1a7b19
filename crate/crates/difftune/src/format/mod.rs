//! Text and binary file formats.
//!
//! All text formats are line oriented: blank lines and anything after `#`
//! are ignored, and parse errors carry the 1-based line number.

mod blocks;
mod measurements;
mod simdata;
mod table;
mod weights;

pub use blocks::{format_block, format_instruction, parse_block, parse_blocks, parse_instruction, write_blocks};
pub use measurements::{parse_measurements, write_measurements};
pub use simdata::{parse_simdata, write_simdata};
pub use table::{parse_table, write_table};
pub use weights::{read_model, read_weights, write_model, write_weights, MODEL_SIDECAR_EXT};

use std::path::Path;

use difftune_core::{Dataset, DatasetError};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub(crate) fn at(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}

/// Non-empty lines with comments stripped, paired with 1-based numbers.
pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim_end();
        (!l.trim().is_empty()).then_some((i + 1, l))
    })
}

/// Reads a blocks file and a measurements file into a validated dataset.
pub fn load_dataset(blocks: &Path, measurements: &Path, register_count: u16) -> Result<Dataset, FormatError> {
    let b = parse_blocks(&std::fs::read_to_string(blocks)?)?;
    for block in &b {
        block.validate(register_count)?;
    }
    let m = parse_measurements(&std::fs::read_to_string(measurements)?)?;
    Ok(Dataset::new(b, m)?)
}

/// Writes a dataset as a blocks file and a measurements file.
pub fn save_dataset(d: &Dataset, blocks: &Path, measurements: &Path) -> Result<(), FormatError> {
    let bl: Vec<_> = d.blocks().cloned().collect();
    std::fs::write(blocks, write_blocks(&bl))?;
    std::fs::write(measurements, write_measurements(d.measurements()))?;
    Ok(())
}
