use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};

/// Per-column centring and scaling. The intercept column, when flagged, is
/// stored as (mean 0, sd 1) and passes through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub intercept: bool,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardizer {
    pub fn identity(p: usize, intercept: bool) -> Self {
        Self {
            intercept,
            means: vec![0.0; p],
            sds: vec![1.0; p],
        }
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| (x[(r, c)] - self.means[c]) / self.sds[c])
    }
}

/// Column means and sample (n − 1) standard deviations.
pub fn standardize_fit(x: &DMatrix<f64>, intercept: bool) -> Result<Standardizer> {
    let n = x.nrows();
    let p = x.ncols();
    let mut means = vec![0.0; p];
    let mut sds = vec![1.0; p];
    for c in 0..p {
        if intercept && c == 0 {
            continue;
        }
        let col = x.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(RecastError::ZeroVariance { column: c });
        }
        means[c] = mean;
        sds[c] = sd;
    }
    Ok(Standardizer { intercept, means, sds })
}

pub fn standardize_apply(s: &Standardizer, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != s.means.len() {
        return Err(RecastError::Dimension {
            expected: s.means.len(),
            got: x.ncols(),
        });
    }
    Ok(s.apply(x))
}
