//! CSV tables with `#` metadata headers, atomic writes, and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RawConfig;
use crate::error::{HarnessError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File name inside the output directory.
    pub name: String,
    pub meta: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// Index of the sweep point the table belongs to, if any.
    pub point: Option<usize>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            meta: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            point: None,
        }
    }

    pub fn meta(mut self, line: impl Into<String>) -> Self {
        self.meta.push(line.into());
        self
    }

    pub fn at_point(mut self, i: usize) -> Self {
        self.point = Some(i);
        self
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, experiment: &str) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        writeln!(out, "# nubs {VERSION}").unwrap();
        writeln!(out, "# experiment: {experiment}").unwrap();
        for m in &self.meta {
            writeln!(out, "# {m}").unwrap();
        }
        writeln!(out, "# columns: {}", self.columns.join(",")).unwrap();
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| HarnessError::io(&self.name, std::io::Error::other(e));
        w.write_record(&self.columns).map_err(err)?;
        for r in &self.rows {
            w.write_record(r).map_err(err)?;
        }
        w.into_inner().map_err(|e| HarnessError::io(&self.name, std::io::Error::other(e.to_string())))
    }
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEntry {
    pub index: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub gamma: f64,
    pub exp_gamma: f64,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub software: String,
    pub version: String,
    pub experiment: String,
    pub wall_time_s: f64,
    pub workers: usize,
    pub config: RawConfig,
    pub points: Vec<PointEntry>,
    pub outputs: Vec<OutputEntry>,
    /// Summary scalars keyed `p<index>.<name>` or `<name>`.
    pub scalars: BTreeMap<String, toml::Value>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        toml::from_str(&text).map_err(|e| HarnessError::Parse { path: path.into(), message: e.to_string() })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let text =
            toml::to_string(self).map_err(|e| HarnessError::Parse { path: MANIFEST_NAME.into(), message: e.to_string() })?;
        let path = dir.join(MANIFEST_NAME);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Reads a table written by [`Table::render`], skipping `#` lines.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |e: csv::Error| HarnessError::Parse { path: path.into(), message: e.to_string() };
    let header = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(bad)?;
    Ok((header, rows))
}
