//! Observation files.
//!
//! One CSV row per observation time, one column per observation
//! coordinate, header `y1, y2, ...`. Synthetic data also gets a JSON
//! sidecar with the generating parameters and seed.

use std::path::Path;

use serde::Serialize;

use crate::table::format_value;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    /// Row-major, `rows × width`.
    pub values: Vec<f64>,
    pub width: usize,
}

impl Observations {
    pub fn rows(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(Error::csv(path))?;
        let width = r.headers().map_err(Error::csv(path))?.len();
        let mut values = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(Error::csv(path))?;
            for v in rec.iter() {
                values.push(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?,
                );
            }
        }
        if width == 0 || values.is_empty() {
            return Err(Error::Data(format!("{}: no observations", path.display())));
        }
        Ok(Observations { values, width })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.write_prefixed(path, "y")
    }

    /// Same layout with columns named `{prefix}1, {prefix}2, ...`.
    pub fn write_prefixed(&self, path: &Path, prefix: &str) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(Error::csv(path))?;
        let header: Vec<String> = (1..=self.width).map(|j| format!("{prefix}{j}")).collect();
        w.write_record(&header).map_err(Error::csv(path))?;
        for row in self.values.chunks(self.width) {
            w.write_record(row.iter().map(|v| format_value(*v))).map_err(Error::csv(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    /// Keep the first `rows` rows.
    pub fn truncate(&mut self, rows: usize) -> Result<()> {
        if rows > self.rows() {
            return Err(Error::Data(format!("asked for {rows} observations, only {} available", self.rows())));
        }
        self.values.truncate(rows * self.width);
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::io(path))
}
