//! Human-readable summary of a finished run directory.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{HarnessError, Result};
use crate::output::read_csv;

/// Summarizes `manifest.json` and the CSVs it lists.
pub fn report(dir: &Path) -> Result<String> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| HarnessError::io(format!("reading {}", manifest_path.display()), e))?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let field = |k: &str| manifest.get(k).map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::new();
    let _ = writeln!(out, "run: {}", dir.display());
    let _ = writeln!(out, "kind: {}", field("kind").trim_matches('"'));
    let _ = writeln!(out, "seed: {}", field("seed"));
    let _ = writeln!(out, "version: {}", field("version").trim_matches('"'));
    let _ = writeln!(out, "wall clock (s): {}", field("wall_clock_seconds"));
    let files = manifest
        .get("files")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    for name in files.iter().filter_map(Value::as_str) {
        let path = dir.join(name);
        if path.extension().is_some_and(|e| e == "csv") {
            let (header, rows) = read_csv(&path)?;
            let _ = writeln!(out, "{name}: {} rows [{}]", rows.len(), header.join(", "));
            if name == "summary.csv" || name == "selection.csv" {
                for row in &rows {
                    let _ = writeln!(out, "  {}", row.join("  "));
                }
            }
        } else {
            let _ = writeln!(out, "{name}");
        }
    }
    Ok(out)
}
