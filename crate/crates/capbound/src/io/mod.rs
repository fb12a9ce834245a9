//! File formats: checkpoint container, architecture documents, datasets and line-delimited reports.

mod archdoc;
mod checkpoint;
mod dataset;

pub use archdoc::{archdoc_to_string, parse_archdoc, read_archdoc};
pub use checkpoint::{Checkpoint, DType, Role, TensorRecord, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use dataset::{parse_dataset, read_dataset, dataset_to_string, DatasetDoc};

use serde::Serialize;
use std::io::Write;

use crate::error::{Error, Result};

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> Result<()> {
    for it in items {
        let line = serde_json::to_string(it).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Parses one JSON object per non-empty line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))))
        .collect()
}
