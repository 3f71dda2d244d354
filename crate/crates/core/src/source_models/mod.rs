//! Source predictors that RECaST calibrates: least squares, logistic
//! regression and a one-hidden-layer ReLU network.
//!
//! Every model exposes a scalar *score* per feature vector. For binary models
//! the score is the logit (pre-link value), so the random effect multiplies
//! the natural parameter.

mod container;
mod logistic;
mod mlp;
mod ols;
mod standardize;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};

pub use container::{load_model, read_model, save_model, write_model, FORMAT_MAGIC, FORMAT_VERSION};
pub use logistic::{fit_logistic, fit_logistic_penalized, fit_logistic_raw};
pub use mlp::{fit_mlp, fit_mlp_with_report, unfreeze_last_layer, unfreeze_last_layer_with_report, MlpConfig, MlpParams, TrainingReport};
pub use ols::{fit_ols, fit_ols_raw};
pub use standardize::{standardize_apply, standardize_fit, Standardizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Continuous,
    Binary,
}

impl std::fmt::Display for ResponseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResponseKind::Continuous => "continuous",
            ResponseKind::Binary => "binary",
        })
    }
}

impl std::str::FromStr for ResponseKind {
    type Err = RecastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(ResponseKind::Continuous),
            "binary" => Ok(ResponseKind::Binary),
            other => Err(RecastError::Config(format!("unknown response kind '{other}'"))),
        }
    }
}

/// Features, responses and whether column 0 is an intercept of ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub response: ResponseKind,
    pub intercept: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: Vec<f64>, response: ResponseKind, intercept: bool) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(RecastError::InvalidData("dataset has no rows".into()));
        }
        if x.nrows() != y.len() {
            return Err(RecastError::Dimension {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(RecastError::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                i % x.nrows(),
                i / x.nrows()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(RecastError::InvalidData(format!("non-finite response at row {i}")));
        }
        if response == ResponseKind::Binary {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(RecastError::InvalidData(format!(
                    "binary response at row {i} is {}, expected 0 or 1",
                    y[i]
                )));
            }
        }
        if intercept && x.column(0).iter().any(|&v| v != 1.0) {
            return Err(RecastError::InvalidData("intercept column must be all ones".into()));
        }
        Ok(Self { x, y, response, intercept })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let x = DMatrix::from_fn(idx.len(), self.p(), |r, c| self.x[(idx[r], c)]);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset {
            x,
            y,
            response: self.response,
            intercept: self.intercept,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Logistic,
    Mlp,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::Mlp => "mlp",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = RecastError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "ols" => Ok(ModelKind::Linear),
            "logistic" | "glm" => Ok(ModelKind::Logistic),
            "mlp" | "dnn" => Ok(ModelKind::Mlp),
            other => Err(RecastError::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Linear { coef: Vec<f64>, residual_sd: f64 },
    Logistic { coef: Vec<f64>, iterations: usize },
    Mlp(MlpParams),
}

/// A fitted source predictor. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub response: ResponseKind,
    pub standardizer: Standardizer,
    pub params: ModelParams,
    /// Number of rows the model was fitted on.
    pub n_fit: usize,
}

impl SourceModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Linear { .. } => ModelKind::Linear,
            ModelParams::Logistic { .. } => ModelKind::Logistic,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn p(&self) -> usize {
        self.standardizer.means.len()
    }

    /// Source score `f(θ̂, x)` for one raw (unstandardized) feature vector.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p() {
            return Err(RecastError::Dimension {
                expected: self.p(),
                got: x.len(),
            });
        }
        let z = self.standardizer.apply_row(x);
        Ok(self.score_standardized(&z))
    }

    fn score_standardized(&self, z: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear { coef, .. } | ModelParams::Logistic { coef, .. } => {
                coef.iter().zip(z).map(|(c, v)| c * v).sum()
            }
            ModelParams::Mlp(net) => net.forward(z),
        }
    }

    /// Scores for every row of a raw feature matrix.
    pub fn score_rows(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.p() {
            return Err(RecastError::Dimension {
                expected: self.p(),
                got: x.ncols(),
            });
        }
        let mut row = vec![0.0; x.ncols()];
        (0..x.nrows())
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = x[(i, j)];
                }
                self.score(&row)
            })
            .collect()
    }

    /// Linear/logistic coefficients mapped back to the raw feature scale.
    /// Requires an intercept column to absorb the centring.
    pub fn raw_coefficients(&self) -> Option<Vec<f64>> {
        let coef = match &self.params {
            ModelParams::Linear { coef, .. } | ModelParams::Logistic { coef, .. } => coef,
            ModelParams::Mlp(_) => return None,
        };
        let s = &self.standardizer;
        if !s.intercept {
            let centred = s.means.iter().any(|&m| m != 0.0) || s.sds.iter().any(|&v| v != 1.0);
            return if centred { None } else { Some(coef.clone()) };
        }
        let mut raw: Vec<f64> = coef.iter().zip(&s.sds).map(|(c, sd)| c / sd).collect();
        raw[0] = coef[0] - (1..coef.len()).map(|j| coef[j] * s.means[j] / s.sds[j]).sum::<f64>();
        Some(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 1.0, -0.5]);
        assert!(Dataset::new(x.clone(), vec![0.0, 1.0], ResponseKind::Binary, true).is_ok());
        assert!(Dataset::new(x.clone(), vec![0.0, 2.0], ResponseKind::Binary, true).is_err());
        assert!(Dataset::new(x.clone(), vec![0.0], ResponseKind::Continuous, true).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, 1.0, 0.0]);
        assert!(Dataset::new(bad, vec![0.0, 1.0], ResponseKind::Continuous, true).is_err());
        let no_icpt = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 1.0, 0.0]);
        assert!(Dataset::new(no_icpt, vec![0.0, 1.0], ResponseKind::Continuous, true).is_err());
    }

    #[test]
    fn linear_score_is_dot_product() {
        let m = SourceModel {
            response: ResponseKind::Continuous,
            standardizer: Standardizer::identity(2, false),
            params: ModelParams::Linear {
                coef: vec![1.0, 2.0],
                residual_sd: 1.0,
            },
            n_fit: 0,
        };
        assert_eq!(m.score(&[3.0, 4.0]).unwrap(), 11.0);
        assert!(matches!(m.score(&[1.0]), Err(RecastError::Dimension { .. })));
    }
}
