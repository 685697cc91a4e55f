//! Run records and their files: a CSV table and a TOML manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

/// One table cell. Reals are written with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
}

impl Cell {
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Int(i) => i as f64,
            Cell::Real(x) => x,
        }
    }

    fn render(self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => format!("{x:.16e}"),
        }
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as u64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    /// Resolved configuration, including the seed.
    pub config: ExperimentConfig,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Aggregates and fit results, keyed by name.
    pub summary: BTreeMap<String, f64>,
    /// Realizations that failed and were redrawn.
    pub events: Vec<String>,
    pub wall_seconds: f64,
}

impl RunRecord {
    pub fn new(config: &ExperimentConfig, columns: Vec<&'static str>) -> Self {
        Self {
            config: config.resolved(),
            columns,
            rows: Vec::new(),
            summary: BTreeMap::new(),
            events: Vec::new(),
            wall_seconds: 0.0,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of one column as floats.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i].as_f64()).collect())
    }

    pub fn summary_value(&self, key: &str) -> Option<f64> {
        self.summary.get(key).copied()
    }

    pub(crate) fn note(&mut self, key: impl Into<String>, value: f64) {
        self.summary.insert(key.into(), value);
    }

    pub fn table_name(&self) -> String {
        format!("{}.csv", self.config.experiment.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub table: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'static str,
    seed: u64,
    created_at: String,
    wall_seconds: f64,
    table: String,
    rows: usize,
    events: &'a [String],
    versions: BTreeMap<&'static str, &'static str>,
    config: &'a ExperimentConfig,
    summary: &'a BTreeMap<String, f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `path` through a temporary sibling that is renamed into place, so a
/// failed write never leaves a truncated file behind.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(contents).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err(path))
}

pub fn render_table(record: &RunRecord) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&record.columns).map_err(csv_err)?;
    for row in &record.rows {
        w.write_record(row.iter().map(|c| c.render())).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::numerical(format!("csv buffer: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::numerical(format!("csv encoding failed: {e}"))
}

pub fn render_manifest(record: &RunRecord) -> Result<String> {
    let manifest = Manifest {
        experiment: record.config.experiment.name(),
        seed: record.config.seed,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        wall_seconds: record.wall_seconds,
        table: record.table_name(),
        rows: record.rows.len(),
        events: &record.events,
        versions: BTreeMap::from([("coherent-heat", env!("CARGO_PKG_VERSION")), ("manifest", "1")]),
        config: &record.config,
        summary: &record.summary,
    };
    toml::to_string(&manifest).map_err(|e| Error::numerical(format!("manifest encoding failed: {e}")))
}

/// Writes `<experiment>.csv` and `<experiment>.manifest.toml` into `dir`.
pub fn emit_outputs(record: &RunRecord, dir: &Path) -> Result<OutputPaths> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let table = dir.join(record.table_name());
    let manifest = dir.join(format!("{}.manifest.toml", record.config.experiment.name()));
    write_atomic(&table, &render_table(record)?)?;
    if let Err(e) = write_atomic(&manifest, render_manifest(record)?.as_bytes()) {
        let _ = fs::remove_file(&table);
        return Err(e);
    }
    Ok(OutputPaths { table, manifest })
}
