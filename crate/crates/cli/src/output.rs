//! Tables, CSV/JSON writers and the run manifest.

use serde::Serialize;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Str(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Str(x.to_string())
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(x as i64)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Str(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Str(s) => json!(s),
        }
    }
}

/// 17 significant digits, scientific.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path, format: Format) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match format {
            Format::Csv => {
                let mut c = csv::Writer::from_writer(w);
                c.write_record(&self.columns)?;
                for r in &self.rows {
                    c.write_record(r.iter().map(Cell::text))?;
                }
                c.flush()?;
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().zip(r).map(|(k, v)| (k.to_string(), v.json())).collect()))
                    .collect();
                serde_json::to_writer_pretty(&mut w, &json!({ "columns": self.columns, "rows": rows }))?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        Ok(())
    }
}

/// `base` with `_suffix` inserted before the extension.
pub fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(e) => format!("{stem}_{suffix}.{}", e.to_string_lossy()),
        None => format!("{stem}_{suffix}"),
    };
    base.with_file_name(name)
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, I: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub status: &'a str,
    pub inputs: &'a I,
    pub tolerances: Value,
    pub outputs: Vec<String>,
    pub diagnostics: Value,
}

pub fn write_json(path: &Path, v: &impl Serialize) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()
}
