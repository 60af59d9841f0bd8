//! Reading inputs.

use std::path::Path;

use anyhow::{Context, Result};
use pdrst::diagram::{from_csv, from_json, strip_infinite, PersistenceDiagram};

pub fn read_diagram(path: &Path, degree: usize) -> Result<PersistenceDiagram> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let d = if path.extension().is_some_and(|e| e == "json") { from_json(&text) } else { from_csv(&text, degree) };
    d.with_context(|| format!("parsing {}", path.display()))
}

/// Reads a diagram and drops its points at infinity.
pub fn read_finite(path: &Path, degree: usize) -> Result<PersistenceDiagram> {
    let (d, removed) = strip_infinite(&read_diagram(path, degree)?);
    if removed > 0 {
        log::info!("{}: ignoring {removed} point(s) at infinity", path.display());
    }
    Ok(d)
}

pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "diagram".into())
}
