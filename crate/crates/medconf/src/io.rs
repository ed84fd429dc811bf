//! CSV ingestion and emission.
//!
//! Dialect: comma separated, `.` decimal point, header row required, UTF-8.
//! Lines starting with `#` are comments. Unbounded endpoints are written as
//! `-inf` and `inf`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use medconf_core::{Interval, LabeledDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("input has no header row")]
    NoHeader,
    #[error("no column named `{0}`")]
    MissingColumn(String),
    #[error("row {row} has {got} fields, expected {expected}")]
    Width { row: usize, expected: usize, got: usize },
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}, column `{column}`: {value} is not a finite number")]
    NonFinite { row: usize, column: String, value: String },
    #[error("expected {expected} feature columns, found {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Core(#[from] medconf_core::Error),
}

/// A numeric table with its header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// A labelled dataset with the names of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedDataset {
    pub features: Vec<String>,
    pub response: String,
    pub data: LabeledDataset,
}

/// Parses a number, accepting `inf`, `+inf` and `-inf`.
pub fn parse_value(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// Shortest round-trip decimal, or `inf` / `-inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a numeric table. Rows are numbered from 1 after the header.
pub fn read_table(reader: impl Read) -> Result<Table, DataError> {
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(DataError::NoHeader);
    }
    let mut rows = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != header.len() {
            return Err(DataError::Width {
                row,
                expected: header.len(),
                got: record.len(),
            });
        }
        let values = record
            .iter()
            .zip(&header)
            .map(|(cell, column)| {
                let v = parse_value(cell).ok_or_else(|| DataError::Parse {
                    row,
                    column: column.clone(),
                    value: cell.to_string(),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(DataError::NonFinite {
                        row,
                        column: column.clone(),
                        value: cell.to_string(),
                    })
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(values);
    }
    Ok(Table { header, rows })
}

/// Index of the response column: `name`, or the last column.
fn response_index(header: &[String], name: Option<&str>) -> Result<usize, DataError> {
    match name {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string())),
        None => Ok(header.len() - 1),
    }
}

/// Reads features and a response; the response is `response` or the last column.
pub fn read_dataset(reader: impl Read, response: Option<&str>) -> Result<NamedDataset, DataError> {
    let table = read_table(reader)?;
    let col = response_index(&table.header, response)?;
    let features: Vec<String> = table
        .header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut x = Vec::with_capacity(table.rows.len() * features.len());
    let mut y = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        y.push(row[col]);
        x.extend(row.iter().enumerate().filter(|(i, _)| *i != col).map(|(_, v)| *v));
    }
    let data = LabeledDataset::new(x, y, features.len())?;
    Ok(NamedDataset {
        features,
        response: table.header[col].clone(),
        data,
    })
}

/// Reads query covariates. A table one column wider than `dim` is taken to
/// carry a response, which is dropped (`response` names it, else the last column).
pub fn read_queries(reader: impl Read, dim: usize, response: Option<&str>) -> Result<Vec<Vec<f64>>, DataError> {
    let table = match read_table(reader) {
        Err(DataError::NoHeader) => return Ok(Vec::new()),
        Err(DataError::Csv(e)) if e.is_io_error() => return Err(DataError::Csv(e)),
        other => other?,
    };
    let width = table.header.len();
    let drop = if response.is_some() || width == dim + 1 {
        Some(response_index(&table.header, response)?)
    } else {
        None
    };
    let got = width - drop.is_some() as usize;
    if got != dim {
        return Err(DataError::Dimension { expected: dim, got });
    }
    Ok(table
        .rows
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != drop)
                .map(|(_, v)| v)
                .collect()
        })
        .collect())
}

/// Parses a comma-separated query point.
pub fn parse_point(text: &str) -> Result<Vec<f64>, DataError> {
    text.split(',')
        .enumerate()
        .map(|(i, cell)| {
            parse_value(cell)
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    row: 1,
                    column: format!("x{i}"),
                    value: cell.to_string(),
                })
        })
        .collect()
}

/// Default feature names `x0, x1, ...`.
pub fn feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("x{i}")).collect()
}

/// Writes a dataset with the given feature names and a `y` column.
pub fn write_dataset(mut out: impl Write, data: &LabeledDataset, features: &[String]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(&mut out);
    let mut header = features.to_vec();
    header.push("y".into());
    csv.write_record(&header)?;
    for (x, y) in data.iter() {
        csv.write_record(x.iter().chain([&y]).map(|v| format_value(*v)))?;
    }
    csv.flush()
}

/// `lo, hi` cells; both blank for the empty interval.
pub fn interval_cells(iv: &Interval) -> [String; 2] {
    match iv.bounds() {
        Some((lo, hi)) => [format_value(lo), format_value(hi)],
        None => [String::new(), String::new()],
    }
}
