use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::{CmdResult, Failure};

pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Num(x) if x.is_finite() => format!("{x:.4}"),
            Cell::Num(x) => x.to_string(),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::Int(n as u64)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

/// A CSV table; numbers are rounded to four decimals on output.
#[derive(Clone, Debug, Default)]
pub struct Table {
    /// Appended to the CSV file stem; empty for the main table.
    pub suffix: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(suffix: &str, header: &[&str]) -> Self {
        Self {
            suffix: suffix.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn to_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        Ok(w.into_inner()?)
    }

    pub fn print(&self) {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(Cell::render).collect())
            .collect();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|c| {
                rendered
                    .iter()
                    .map(|r| r[c].len())
                    .chain([self.header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        println!("{}", line(&self.header));
        for r in &rendered {
            println!("{}", line(r));
        }
    }
}

/// The JSON document every command writes.
#[derive(Serialize)]
pub struct Report {
    pub schema: u32,
    pub command: String,
    pub seed: u64,
    pub config: Value,
    pub summaries: Vec<Value>,
    pub degenerate_skipped: usize,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub details: Map<String, Value>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> CmdResult<Self> {
        Ok(Self {
            schema: SCHEMA,
            command: command.into(),
            seed,
            config: to_value(config)?,
            summaries: Vec::new(),
            degenerate_skipped: 0,
            details: Map::new(),
            tables: Vec::new(),
        })
    }

    /// Adds a summary tagged with `kind`.
    pub fn summary(&mut self, kind: &str, value: &impl Serialize) -> CmdResult<()> {
        let mut v = to_value(value)?;
        if let Value::Object(map) = &mut v {
            map.insert("kind".into(), Value::String(kind.into()));
        }
        self.summaries.push(v);
        Ok(())
    }

    pub fn detail(&mut self, key: &str, value: &impl Serialize) -> CmdResult<()> {
        self.details.insert(key.into(), to_value(value)?);
        Ok(())
    }

    /// Writes the JSON report and every table next to it, then echoes the
    /// tables to stdout. Returns the written paths.
    pub fn write(&self, out: &Path) -> CmdResult<Vec<PathBuf>> {
        let mut text = serde_json::to_string_pretty(self).map_err(anyhow::Error::from)?;
        text.push('\n');
        let mut written = vec![out.to_path_buf()];
        write_file(out, text.as_bytes())?;
        for t in &self.tables {
            let path = csv_path(out, &t.suffix);
            write_file(&path, &t.to_csv()?)?;
            written.push(path);
        }
        for t in self.tables.iter().filter(|t| t.suffix.is_empty()) {
            t.print();
        }
        Ok(written)
    }
}

fn to_value(v: &impl Serialize) -> CmdResult<Value> {
    serde_json::to_value(v).map_err(|e| Failure::Data(e.into()))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult<()> {
    fs::write(path, bytes)
        .map_err(|e| Failure::Data(anyhow::anyhow!("cannot write {}: {e}", path.display())))
}

pub fn csv_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}{suffix}.csv"))
}
