//! CSV and JSON emission. Floats are written with 17 significant digits so
//! every value round-trips; nothing is written until all rows exist.

use std::path::PathBuf;

use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Bump when a column set or summary field changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Writes `<out>/<name>.csv` and `<out>/<name>.json`; returns both paths.
pub fn emit(cfg: &ExperimentConfig, table: &Table, summary: Value) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join(format!("{}.csv", cfg.name));
    let json_path = cfg.out.join(format!("{}.json", cfg.name));

    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    w.flush()?;

    let doc = json!({
        "tool": "herald",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "seed": cfg.seed,
        "shards": cfg.shards,
        "engine": cfg.engine,
        "csv": csv_path.file_name().map(|n| n.to_string_lossy().into_owned()),
        "columns": table.header,
        "rows": table.rows.len(),
        "config": cfg,
        "summary": summary,
    });
    let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(&json_path, text)?;
    Ok((csv_path, json_path))
}
