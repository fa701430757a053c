//! Deterministic result files: CSV/JSON tables with unit-bearing column
//! names, JSON sidecar metadata, a run manifest with checksums, and the
//! on-disk cache of spectral kernel tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::OutputFormat;
use crate::response::KernelGrid;
use crate::{Error, Result};

/// One output column: name and physical unit ("1" for dimensionless).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
}

impl ColumnSpec {
    pub fn new(name: &str, unit: &str) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
        }
    }
}

/// An in-memory result table, rendered to disk in one deterministic pass.
#[derive(Debug, Clone)]
pub struct Table {
    /// File stem, e.g. "delta-map".
    pub name: String,
    pub columns: Vec<ColumnSpec>,
    pub rows: Vec<Vec<f64>>,
    /// Set when a quadrature failure forced the table to stop early; the
    /// marker is recorded in the sidecar and the manifest.
    pub partial: Option<String>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<ColumnSpec>) -> Self {
        Self {
            name: name.into(),
            columns,
            rows: Vec::new(),
            partial: None,
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row arity mismatch");
        self.rows.push(row);
    }
}

/// Scientific notation with a fixed number of significant digits: the
/// single formatting rule of every data file, so reruns are byte-stable.
pub fn format_value(v: f64, precision: usize) -> String {
    format!("{:.*e}", precision.saturating_sub(1), v)
}

fn render_csv(table: &Table, precision: usize) -> String {
    let mut s = String::new();
    let header: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    s.push_str(&header.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|&v| format_value(v, precision)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn render_json(table: &Table, precision: usize) -> String {
    #[derive(Serialize)]
    struct JsonTable<'a> {
        columns: &'a [ColumnSpec],
        rows: Vec<Vec<String>>,
    }
    let rows = table
        .rows
        .iter()
        .map(|r| r.iter().map(|&v| format_value(v, precision)).collect())
        .collect();
    let mut s = serde_json::to_string_pretty(&JsonTable {
        columns: &table.columns,
        rows,
    })
    .expect("table serializes");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Manifest entry of one emitted data file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
    pub rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partial: Option<String>,
}

/// Wall-clock accounting per pipeline stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of one invocation: inputs, outputs, checksums, timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub tool_version: String,
    pub files: Vec<FileEntry>,
    pub stages: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            files: Vec::new(),
            stages: Vec::new(),
        }
    }

    fn add_file(&mut self, entry: FileEntry) -> Result<()> {
        if self.files.iter().any(|f| f.file == entry.file) {
            return Err(Error::Io(format!(
                "output file {} emitted twice in one run",
                entry.file
            )));
        }
        self.files.push(entry);
        Ok(())
    }

    pub fn add_stage(&mut self, stage: &str, seconds: f64) {
        self.stages.push(StageTiming {
            stage: stage.into(),
            seconds,
        });
    }

    /// Write the manifest itself (not listed among its own files).
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text)
            .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Write one table plus its metadata sidecar, recording both in the
/// manifest. Returns the data file path.
pub fn write_table(
    dir: &Path,
    table: &Table,
    format: OutputFormat,
    precision: usize,
    manifest: &mut RunManifest,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let (ext, body) = match format {
        OutputFormat::Csv => ("csv", render_csv(table, precision)),
        OutputFormat::Json => ("json", render_json(table, precision)),
    };
    let file_name = format!("{}.{ext}", table.name);
    let path = dir.join(&file_name);
    std::fs::write(&path, body.as_bytes())
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    manifest.add_file(FileEntry {
        file: file_name.clone(),
        sha256: sha256_hex(body.as_bytes()),
        rows: table.rows.len(),
        partial: table.partial.clone(),
    })?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        config_hash: &'a str,
        tool_version: &'a str,
        columns: &'a [ColumnSpec],
        rows: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        partial: &'a Option<String>,
    }
    let mut side = serde_json::to_string_pretty(&Sidecar {
        config_hash: &manifest.config_hash,
        tool_version: &manifest.tool_version,
        columns: &table.columns,
        rows: table.rows.len(),
        partial: &table.partial,
    })
    .expect("sidecar serializes");
    side.push('\n');
    let side_name = format!("{}.meta.json", table.name);
    let side_path = dir.join(&side_name);
    std::fs::write(&side_path, side.as_bytes())
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", side_path.display())))?;
    manifest.add_file(FileEntry {
        file: side_name,
        sha256: sha256_hex(side.as_bytes()),
        rows: table.rows.len(),
        partial: table.partial.clone(),
    })?;
    Ok(path)
}

/// Load a cached spectral kernel table keyed by the material/stack hash,
/// or build and persist it. Stale caches never match a fresh key.
pub fn cached_kernel_grid(
    dir: &Path,
    key: &str,
    build: impl FnOnce() -> Result<KernelGrid>,
) -> Result<KernelGrid> {
    let path = dir.join(format!("kernel-{}.json", &key[..16.min(key.len())]));
    if let Ok(text) = std::fs::read_to_string(&path) {
        #[derive(Deserialize)]
        struct Cached {
            key: String,
            grid: KernelGrid,
        }
        if let Ok(c) = serde_json::from_str::<Cached>(&text) {
            if c.key == key {
                return Ok(c.grid);
            }
        }
        // Hash collision on the short name or corrupt file: rebuild.
    }
    let grid = build()?;
    #[derive(Serialize)]
    struct Cached<'a> {
        key: &'a str,
        grid: &'a KernelGrid,
    }
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
    let text = serde_json::to_string(&Cached { key, grid: &grid }).expect("grid serializes");
    std::fs::write(&path, text)
        .map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok(grid)
}
