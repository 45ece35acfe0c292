//! Plain-text artifacts: comma separated tables with `#` metadata lines and
//! `key = value` manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{LabError, Result};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// In-memory CSV table. Values are printed with the shortest representation
/// that round-trips, so identical inputs give identical bytes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            metadata: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Table::default();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once(':') {
                    table.metadata.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                table.columns = line.split(',').map(|c| c.trim().to_string()).collect();
                header_seen = true;
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| LabError::InvalidParameter(format!("line {}: {e}", lineno + 1)))?;
            if row.len() != table.columns.len() {
                return Err(LabError::InvalidParameter(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    table.columns.len(),
                    row.len()
                )));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

pub fn render_manifest(entries: &[(String, String)]) -> String {
    let mut out = format!("artifact_version = {ARTIFACT_VERSION}\n");
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

pub fn write_manifest(dir: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    fs::write(dir.as_ref().join("manifest.txt"), render_manifest(entries))?;
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::Usage(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(LabError::Usage(format!("line {}: empty key", lineno + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// One line per checked quantity, `PASS` or `FAIL`.
#[derive(Debug, Clone, Default)]
pub struct AnchorReport {
    pub lines: Vec<(String, bool, String)>,
}

impl AnchorReport {
    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) {
        self.lines.push((name.to_string(), ok, detail.into()));
    }

    pub fn all_passed(&self) -> bool {
        self.lines.iter().all(|(_, ok, _)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (name, ok, detail) in &self.lines {
            let _ = writeln!(out, "{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::write(dir.as_ref().join("anchors.txt"), self.render())?;
        Ok(())
    }
}
