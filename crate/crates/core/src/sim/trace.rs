//! Uniformly sampled simulation records and their CSV form.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Switch,
    Publish,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// Column-named table of samples plus a list of discrete events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new(), events: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Writes `# <manifest>`, the header and one line per row. Floats use the
    /// shortest round-trip representation, so equal traces give equal bytes.
    pub fn write_csv<W: Write>(&self, mut w: W, manifest: &str) -> Result<()> {
        writeln!(w, "# {manifest}")?;
        writeln!(w, "{}", self.columns.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            line.clear();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&format!("{v}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, manifest: &str) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, manifest).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }

    /// SHA-256 of the CSV bytes.
    pub fn csv_hash(&self, manifest: &str) -> String {
        hex::encode(Sha256::digest(self.to_csv_string(manifest).as_bytes()))
    }
}

/// Column names `prefix_0 .. prefix_{k-1}`.
pub(crate) fn indexed(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| format!("{prefix}_{i}"))
}
