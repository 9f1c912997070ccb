//! Result tables and machine-readable emission.
//!
//! Floats are written with 17 significant digits so parsing the file back
//! reproduces every value bit-exactly; non-finite values use the tokens
//! `inf`, `-inf` and `nan` in both formats.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Float(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(CliError::Config(format!("unknown format '{other}' (csv|json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn float_token(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // 17 significant digits: round-trip exact for f64.
        format!("{v:.16e}")
    }
}

fn cell_token(cell: &Cell) -> String {
    match cell {
        Cell::Int(v) => v.to_string(),
        Cell::Float(v) => float_token(*v),
        Cell::Text(s) => {
            assert!(
                !s.contains(',') && !s.contains('\n') && !s.contains('"'),
                "text cells must not need CSV quoting: {s:?}"
            );
            s.clone()
        }
        Cell::Empty => String::new(),
    }
}

pub fn to_csv(table: &Table) -> String {
    let mut out = String::new();
    out.push_str(&table.columns.join(","));
    out.push('\n');
    for row in &table.rows {
        let tokens: Vec<String> = row.iter().map(cell_token).collect();
        let _ = writeln!(out, "{}", tokens.join(","));
    }
    out
}

pub fn to_json(table: &Table) -> String {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|row| {
            let obj: serde_json::Map<String, serde_json::Value> = table
                .columns
                .iter()
                .zip(row)
                .map(|(col, cell)| {
                    let value = match cell {
                        Cell::Int(v) => serde_json::Value::from(*v),
                        Cell::Float(v) if v.is_finite() => serde_json::Value::from(*v),
                        Cell::Float(v) => serde_json::Value::from(float_token(*v)),
                        Cell::Text(s) => serde_json::Value::from(s.clone()),
                        Cell::Empty => serde_json::Value::Null,
                    };
                    (col.clone(), value)
                })
                .collect();
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("table serialization")
}

/// Write the table in the requested format.
pub fn emit(table: &Table, format: Format, path: &Path) -> Result<(), CliError> {
    let body = match format {
        Format::Csv => to_csv(table),
        Format::Json => to_json(table),
    };
    fs::write(path, body)
        .map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
}

fn parse_token(token: &str) -> Cell {
    if token.is_empty() {
        return Cell::Empty;
    }
    match token {
        "inf" => return Cell::Float(f64::INFINITY),
        "-inf" => return Cell::Float(f64::NEG_INFINITY),
        "nan" => return Cell::Float(f64::NAN),
        _ => {}
    }
    let looks_int = token
        .strip_prefix('-')
        .unwrap_or(token)
        .chars()
        .all(|c| c.is_ascii_digit())
        && !token.is_empty();
    if looks_int {
        if let Ok(v) = token.parse::<i64>() {
            return Cell::Int(v);
        }
    }
    if token.contains(['e', '.']) {
        if let Ok(v) = token.parse::<f64>() {
            return Cell::Float(v);
        }
    }
    Cell::Text(token.to_string())
}

pub fn parse_csv(content: &str) -> Result<Table, CliError> {
    let mut lines = content.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty CSV".into()))?;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<Cell> = line.split(',').map(parse_token).collect();
        if cells.len() != columns.len() {
            return Err(CliError::Config(format!(
                "CSV row has {} cells for {} columns",
                cells.len(),
                columns.len()
            )));
        }
        rows.push(cells);
    }
    Ok(Table { columns, rows })
}

pub fn parse_json(content: &str) -> Result<Table, CliError> {
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = serde_json::from_str(content)
        .map_err(|e| CliError::Config(format!("bad JSON table: {e}")))?;
    let mut table = Table::default();
    for (i, obj) in rows.iter().enumerate() {
        if i == 0 {
            table.columns = obj.keys().cloned().collect();
        }
        let row: Vec<Cell> = table
            .columns
            .iter()
            .map(|col| match obj.get(col) {
                None | Some(serde_json::Value::Null) => Cell::Empty,
                Some(serde_json::Value::Number(n)) => {
                    if let Some(v) = n.as_i64() {
                        Cell::Int(v)
                    } else {
                        Cell::Float(n.as_f64().unwrap())
                    }
                }
                Some(serde_json::Value::String(s)) => parse_token(s),
                Some(other) => Cell::Text(other.to_string()),
            })
            .collect();
        table.rows.push(row);
    }
    Ok(table)
}
