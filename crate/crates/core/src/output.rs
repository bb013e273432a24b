//! Tabular output as CSV or JSON lines, each file opened by a provenance
//! header.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    JsonLines,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        }
    }
}

/// Identifies the inputs of a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(config_text: &[u8], seed: Option<u64>) -> Self {
        Provenance { version: VERSION.to_string(), config_sha256: sha256_hex(config_text), seed }
    }

    fn comment(&self, extra: &[(String, String)]) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let mut line = format!("# nearfield {} config_sha256={} seed={}", self.version, self.config_sha256, seed);
        for (k, v) in extra {
            let _ = write!(line, " {k}={v}");
        }
        line
    }

    fn json(&self, extra: &[(String, String)]) -> String {
        let mut header = Map::new();
        header.insert("version".into(), Value::from(self.version.clone()));
        header.insert("config_sha256".into(), Value::from(self.config_sha256.clone()));
        header.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        for (k, v) in extra {
            header.insert(k.clone(), Value::from(v.clone()));
        }
        let mut outer = Map::new();
        outer.insert("_header".into(), Value::Object(header));
        Value::Object(outer).to_string()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Shortest round-trip text of `v`, in exponent form outside 1e-4 ≤ |v| < 1e15.
pub fn number(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) if v.is_infinite() => if *v > 0.0 { "inf" } else { "-inf" }.to_string(),
            Cell::Num(v) if v.is_nan() => "nan".to_string(),
            Cell::Num(v) => number(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
            Cell::Text(s) => s.clone(),
        }
    }

    /// Non-finite numbers become strings since JSON has no representation for them.
    fn json(&self) -> Value {
        match self {
            Cell::Num(v) if v.is_finite() => Value::from(*v),
            Cell::Num(_) => Value::from(self.csv()),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Extra `key=value` pairs for the header.
    pub notes: Vec<(String, String)>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new(), notes: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl ToString) {
        self.notes.push((key.to_string(), value.to_string()));
    }

    pub fn render(&self, format: Format, provenance: &Provenance) -> String {
        let mut out = String::new();
        match format {
            Format::Csv => {
                out.push_str(&provenance.comment(&self.notes));
                out.push('\n');
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
            Format::JsonLines => {
                out.push_str(&provenance.json(&self.notes));
                out.push('\n');
                for row in &self.rows {
                    let map: Map<String, Value> =
                        self.columns.iter().zip(row).map(|(c, v)| (c.to_string(), v.json())).collect();
                    out.push_str(&Value::Object(map).to_string());
                    out.push('\n');
                }
            }
        }
        out
    }
}

/// Text file prefixed with the provenance comment.
pub fn render_text(body: &str, provenance: &Provenance) -> String {
    format!("{}\n{body}", provenance.comment(&[]))
}

/// Writes `contents` to `dir/name`, creating `dir` as needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
