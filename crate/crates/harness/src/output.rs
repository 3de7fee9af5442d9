//! CSV emission with fixed float formatting.

use std::path::Path;

use crate::error::{HarnessError, Result};

/// Seventeen significant digits in scientific notation, round-trip exact.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Empty cell for `None`.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

/// Writes a header row followed by `rows`.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let context = || format!("writing {}", path.display());
    let mut writer = csv::Writer::from_path(path).map_err(|source| HarnessError::Csv {
        context: context(),
        source,
    })?;
    let wrap = |source| HarnessError::Csv {
        context: context(),
        source,
    };
    writer.write_record(header).map_err(wrap)?;
    for row in rows {
        writer.write_record(&row).map_err(wrap)?;
    }
    writer
        .flush()
        .map_err(|e| HarnessError::io(context(), e))
}

/// Reads a CSV into its header and rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let wrap = |source| HarnessError::Csv {
        context: format!("reading {}", path.display()),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(wrap)?;
    let header = reader.headers().map_err(wrap)?.iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(wrap)?;
    Ok((header, rows))
}

/// Generic matplotlib script: plots every numeric column against the first.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot every CSV in a run directory: numeric columns against the first column."""
import csv
import pathlib
import sys

import matplotlib.pyplot as plt

run = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
for path in sorted(run.glob("*.csv")):
    with path.open() as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if not body:
        continue

    def numeric(j):
        try:
            return [float(r[j]) for r in body]
        except ValueError:
            return None

    x = numeric(0)
    if x is None:
        continue
    fig, ax = plt.subplots()
    for j in range(1, len(header)):
        y = numeric(j)
        if y is not None:
            ax.plot(x, y, label=header[j])
    ax.set_xlabel(header[0])
    ax.legend(fontsize="small")
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
"#;
