use std::path::Path;

use serde_json::{Map, Value};

use crate::{CliError, Format};

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Int(v) => Value::from(*v),
            Cell::Text(s) => Value::from(s.clone()),
            Cell::Bool(b) => Value::from(*b),
        }
    }
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

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
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

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

/// One emitted file: a table, optionally with a richer JSON form.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub json: Option<Value>,
}

impl Artifact {
    pub fn table(name: &str, header: &[&str]) -> Self {
        Artifact {
            name: name.to_string(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            json: None,
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn rows_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut m = Map::new();
                    for (h, c) in self.header.iter().zip(r) {
                        m.insert(h.clone(), c.json());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }
}

fn all_finite(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Number(n) => n.as_f64().map_or(true, f64::is_finite),
        Value::Array(a) => a.iter().all(all_finite),
        Value::Object(o) => o.values().all(all_finite),
        _ => true,
    }
}

/// Writes the artifact and returns the file name.
pub fn write(dir: &Path, art: &Artifact, format: Format) -> Result<String, CliError> {
    let bad = art
        .rows
        .iter()
        .flatten()
        .any(|c| matches!(c, Cell::Num(v) if !v.is_finite()));
    if bad || art.json.as_ref().is_some_and(|j| !all_finite(j)) {
        return Err(CliError::Lib(iasched::Error::Numeric(format!(
            "non-finite value in {} output",
            art.name
        ))));
    }
    match format {
        Format::Csv => {
            let file = format!("{}.csv", art.name);
            let mut w = csv::Writer::from_path(dir.join(&file)).map_err(|e| CliError::Io(e.to_string()))?;
            w.write_record(&art.header).map_err(|e| CliError::Io(e.to_string()))?;
            for row in &art.rows {
                w.write_record(row.iter().map(Cell::text))
                    .map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush()?;
            Ok(file)
        }
        Format::Json => {
            let file = format!("{}.json", art.name);
            let body = art.json.clone().unwrap_or_else(|| art.rows_json());
            std::fs::write(dir.join(&file), serde_json::to_string_pretty(&body).expect("serializable"))?;
            Ok(file)
        }
    }
}
