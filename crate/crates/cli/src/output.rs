//! Canonical JSON and CSV encodings shared by every experiment.
//!
//! Canonical JSON has sorted object keys, no insignificant whitespace, a
//! trailing LF and shortest round-trip floats. Non-finite floats become `null`.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Sorted-key JSON, one line, LF-terminated.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // `serde_json::Value` keeps object keys in a BTreeMap, so a round trip sorts them.
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        ryu::Buffer::new().format_finite(x).to_owned()
    } else if x.is_nan() {
        "NaN".to_owned()
    } else if x > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}

/// A CSV cell.
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Self::F(x) => fmt_f64(*x),
            Self::U(n) => n.to_string(),
            Self::B(b) => b.to_string(),
        }
    }
}

pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.into_inner()
        .map_err(|e| anyhow::anyhow!("csv buffer: {e}"))
}

/// Data files written by one run, in write order.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<(String, String, u64)>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    /// Writes `bytes` to `dir/name` and records its checksum.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let mut f =
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
        self.files
            .push((name.to_owned(), sha256_hex(bytes), bytes.len() as u64));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, canonical_json(value)?.as_bytes())
    }
}
