//! Per-replicate tables and their percentile aggregation.
//!
//! A per-replicate CSV has the x-axis in its first column, the replicate
//! index in a column named `replicate`, then one numeric column per
//! quantity. The aggregate CSV keeps the x column and replaces every
//! quantity `q` by `q_median`, `q_p5`, `q_p95`.

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub x: String,
    pub replicate: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateTable {
    pub x_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub x: String,
    /// `(median, p5, p95)` per column.
    pub stats: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub x_name: String,
    pub columns: Vec<String>,
    pub rows: Vec<AggregateRow>,
}

impl ReplicateTable {
    pub fn new(x_name: &str, columns: Vec<String>) -> Self {
        ReplicateTable { x_name: x_name.to_owned(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, x: impl ToString, replicate: usize, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.columns.len());
        self.rows.push(Row { x: x.to_string(), replicate, values });
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        let mut header = vec![self.x_name.as_str(), "replicate"];
        header.extend(self.columns.iter().map(String::as_str));
        w.write_record(&header).map_err(Error::csv(path))?;
        for row in &self.rows {
            let mut rec = vec![row.x.clone(), row.replicate.to_string()];
            rec.extend(row.values.iter().map(|v| format_value(*v)));
            w.write_record(&rec).map_err(Error::csv(path))?;
        }
        w.flush().map_err(Error::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(Error::csv(path))?;
        let header = r.headers().map_err(Error::csv(path))?.clone();
        if header.len() < 2 {
            return Err(Error::Data(format!("{}: need an x column and at least one value column", path.display())));
        }
        let has_replicate = header.get(1) == Some("replicate");
        let first_value = if has_replicate { 2 } else { 1 };
        let columns: Vec<String> = header.iter().skip(first_value).map(str::to_owned).collect();
        let mut table = ReplicateTable::new(&header[0], columns);
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(Error::csv(path))?;
            let replicate = if has_replicate {
                rec[1].parse().map_err(|e| Error::Data(format!("{}: row {}: replicate: {e}", path.display(), i + 1)))?
            } else {
                i
            };
            let values = rec
                .iter()
                .skip(first_value)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
            table.push(&rec[0], replicate, values);
        }
        Ok(table)
    }

    /// Median, 5% and 95% nearest-rank percentiles for every x, in order
    /// of first appearance. NaN entries are skipped.
    pub fn aggregate(&self) -> Result<AggregateTable> {
        if self.rows.is_empty() {
            return Err(Error::Data("nothing to aggregate".into()));
        }
        let mut order: Vec<&str> = Vec::new();
        for row in &self.rows {
            if !order.contains(&row.x.as_str()) {
                order.push(&row.x);
            }
        }
        let rows = order
            .into_iter()
            .map(|x| {
                let stats = (0..self.columns.len())
                    .map(|c| {
                        let mut v: Vec<f64> = self
                            .rows
                            .iter()
                            .filter(|r| r.x == x)
                            .map(|r| r.values[c])
                            .filter(|v| !v.is_nan())
                            .collect();
                        v.sort_by(f64::total_cmp);
                        (nearest_rank(&v, 50), nearest_rank(&v, 5), nearest_rank(&v, 95))
                    })
                    .collect();
                AggregateRow { x: x.to_owned(), stats }
            })
            .collect();
        Ok(AggregateTable { x_name: self.x_name.clone(), columns: self.columns.clone(), rows })
    }
}

impl AggregateTable {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = writer(path)?;
        let mut header = vec![self.x_name.clone()];
        for c in &self.columns {
            header.extend([format!("{c}_median"), format!("{c}_p5"), format!("{c}_p95")]);
        }
        w.write_record(&header).map_err(Error::csv(path))?;
        for row in &self.rows {
            let mut rec = vec![row.x.clone()];
            for &(m, lo, hi) in &row.stats {
                rec.extend([format_value(m), format_value(lo), format_value(hi)]);
            }
            w.write_record(&rec).map_err(Error::csv(path))?;
        }
        w.flush().map_err(Error::io(path))
    }
}

/// The `⌈p·n/100⌉`-th smallest value (1-based), NaN for an empty slice.
pub fn nearest_rank(sorted: &[f64], percent: usize) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let rank = (percent * n).div_ceil(100).clamp(1, n);
    sorted[rank - 1]
}

/// Shortest decimal that reads back to the same `f64`, in exponent form
/// for very small or very large magnitudes.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(Error::csv(path))
}

/// Write a CSV with an arbitrary header, for dumps outside the replicate
/// schema.
pub fn write_rows<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(values: &[f64]) -> ReplicateTable {
        let mut t = ReplicateTable::new("t", vec!["a".into()]);
        for (i, &v) in values.iter().enumerate() {
            t.push(0, i, vec![v]);
        }
        t
    }

    #[test]
    fn single_replicate_gives_flat_band() {
        let agg = table(&[3.5]).aggregate().unwrap();
        assert_eq!(agg.rows[0].stats[0], (3.5, 3.5, 3.5));
    }

    #[test]
    fn nearest_rank_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let agg = table(&v).aggregate().unwrap();
        assert_eq!(agg.rows[0].stats[0], (50.0, 5.0, 95.0));
    }

    #[test]
    fn constant_replicates_give_zero_width() {
        let (m, lo, hi) = table(&[2.0; 17]).aggregate().unwrap().rows[0].stats[0];
        assert_eq!((m, lo, hi), (2.0, 2.0, 2.0));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(table(&[]).aggregate().is_err());
    }

    #[test]
    fn x_order_is_preserved() {
        let mut t = ReplicateTable::new("N", vec!["s".into()]);
        for r in 0..3 {
            for (x, v) in [(500, 1.0), (100, 2.0)] {
                t.push(x, r, vec![v]);
            }
        }
        let agg = t.aggregate().unwrap();
        assert_eq!(agg.rows.iter().map(|r| r.x.as_str()).collect::<Vec<_>>(), ["500", "100"]);
    }

    #[test]
    fn values_read_back_exactly() {
        for v in [0.0, -1.5, 7.169279704621123e-6, 1e-300, 3.0e20, 0.1 + 0.2, f64::MIN_POSITIVE] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_value(2.5e-7), "2.5e-7");
        assert_eq!(format_value(12.0), "12");
    }

    #[test]
    fn nan_entries_are_skipped() {
        assert_eq!(table(&[f64::NAN, 1.0, 2.0]).aggregate().unwrap().rows[0].stats[0], (1.0, 1.0, 2.0));
        assert!(table(&[f64::NAN]).aggregate().unwrap().rows[0].stats[0].0.is_nan());
    }
}
