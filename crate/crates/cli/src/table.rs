//! CSV dataset ingestion: header row, one label column, numeric features.

use std::path::Path;

use nalgebra::DMatrix;
use recast_core::{Dataset, ResponseKind};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Table {
    pub features: Vec<String>,
    /// Row-major feature values, without any intercept.
    pub values: Vec<f64>,
    pub labels: Option<Vec<f64>>,
    pub rows: usize,
}

fn parse_cell(s: &str, line: u64, column: &str) -> Result<f64, CliError> {
    let t = s.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| CliError::Data(format!("line {line}, column '{column}': cannot parse '{t}' as a number")))?;
    if !v.is_finite() {
        return Err(CliError::Data(format!("line {line}, column '{column}': value is not finite")));
    }
    Ok(v)
}

/// Reads `path`. The label column is split off when present; `require_label`
/// turns its absence into an error.
pub fn read_table(path: &Path, label_col: &str, require_label: bool) -> Result<Table, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header.iter().position(|h| h == label_col);
    if require_label && label_idx.is_none() {
        return Err(CliError::Data(format!(
            "{}: label column '{label_col}' not found (choose it with --label-col)",
            path.display()
        )));
    }
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if features.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }
    let mut values = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        for (i, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell, line, &header[i])?;
            if Some(i) == label_idx {
                labels.as_mut().expect("label column").push(v);
            } else {
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    Ok(Table {
        features,
        values,
        labels,
        rows,
    })
}

impl Table {
    /// Feature matrix, with a leading column of ones when `intercept`.
    pub fn design(&self, intercept: bool) -> DMatrix<f64> {
        let k = self.features.len();
        let off = usize::from(intercept);
        DMatrix::from_fn(self.rows, k + off, |r, c| {
            if c < off {
                1.0
            } else {
                self.values[r * k + c - off]
            }
        })
    }

    pub fn dataset(&self, response: ResponseKind, intercept: bool) -> Result<Dataset, CliError> {
        let y = self
            .labels
            .clone()
            .ok_or_else(|| CliError::Data("dataset has no label column".into()))?;
        if response == ResponseKind::Binary {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(CliError::Data(format!("line {}: binary label must be 0 or 1, got {}", i + 2, y[i])));
            }
            if y.iter().all(|&v| v == y[0]) {
                return Err(CliError::Data("binary labels contain a single class".into()));
            }
        }
        Ok(Dataset::new(self.design(intercept), y, response, intercept)?)
    }
}
