//! Result tables and their CSV / JSON / plot-data renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::CliError;

/// One table cell. Non-finite floats become `null` in JSON and read back as `Missing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Missing,
}

impl Value {
    /// Round-trip exact text (`{:?}` of `f64` is the shortest representation that reparses).
    pub fn render(&self) -> String {
        match self {
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(x) if x.is_nan() => "NaN".into(),
            Value::Float(x) => format!("{x:?}"),
            Value::Text(s) => s.clone(),
            Value::Missing => "NaN".into(),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(x) => Some(*x),
            Value::Bool(b) => Some(f64::from(u8::from(*b))),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Float(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Text(s.into())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Text(s)
    }
}

impl From<Option<f64>> for Value {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Value::Missing, Value::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub artifact_version: String,
    pub experiment: String,
    pub kind: String,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    /// Output stem relative to the output directory.
    pub name: String,
    pub schema: Vec<String>,
    pub rows: Vec<Vec<Value>>,
    pub provenance: Provenance,
    /// Columns written as the `(x, y)` plot-data series.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot: Option<(String, String)>,
    /// Kind-specific aggregate (e.g. the entropy result object).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
    /// Rows that did not converge or failed.
    #[serde(default)]
    pub unconverged: usize,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, schema: &[&str], provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            schema: schema.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            provenance,
            plot: None,
            summary: None,
            unconverged: 0,
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.schema.len(), "row arity must match the schema of {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c == name)
    }

    /// Values of a numeric column (`None` for non-numeric cells).
    pub fn numbers(&self, name: &str) -> Vec<Option<f64>> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64()).collect(),
            None => Vec::new(),
        }
    }

    pub fn texts(&self, name: &str) -> Vec<String> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].render()).collect(),
            None => Vec::new(),
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.schema.len())
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.schema)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Value::render))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialize")
    }

    /// Two-column series `x y`, one line per row with both cells numeric.
    pub fn to_plotdata(&self) -> Option<String> {
        let (xc, yc) = self.plot.as_ref()?;
        let (xi, yi) = (self.column(xc)?, self.column(yc)?);
        let mut out = format!("# {xc} {yc}\n");
        for r in &self.rows {
            if let (Some(x), Some(y)) = (r[xi].as_f64(), r[yi].as_f64()) {
                let _ = writeln!(out, "{} {}", Value::Float(x).render(), Value::Float(y).render());
            }
        }
        Some(out)
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes every table in `format` under `dir` as `<name>.csv`, `<name>.json` or `<name>.dat`.
/// Tables without a plot series are skipped for `plotdata`.
pub fn emit_report(tables: &[ResultTable], format: Format, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for t in tables {
        if !t.is_well_formed() {
            return Err(CliError::Validation(format!("table {} has rows of the wrong arity", t.name)));
        }
        match format {
            Format::Csv => written.push(write(dir.join(format!("{}.csv", t.name)), &t.to_csv()?)?),
            Format::Json => written.push(write(dir.join(format!("{}.json", t.name)), &t.to_json())?),
            Format::Plotdata => {
                if let Some(text) = t.to_plotdata() {
                    written.push(write(dir.join(format!("{}.dat", t.name)), &text)?);
                }
            }
        }
    }
    Ok(written)
}

/// Reads the JSON tables found directly under `dir`, sorted by file name.
pub fn read_tables(dir: &Path) -> Result<Vec<ResultTable>, CliError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        if let Ok(t) = serde_json::from_str::<ResultTable>(&text) {
            out.push(t);
        }
    }
    Ok(out)
}
