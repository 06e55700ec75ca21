//! Shared text formatting for CSV and JSON artifacts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;

/// Scientific notation with 12 significant digits, e.g. `1.25000000000e-3`.
pub fn fmt_sci(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes a file through a buffered writer filled by `body`.
pub fn write_file<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    let mut w = BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()?;
    Ok(())
}
