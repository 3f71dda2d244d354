//! Log prior and log posterior (up to a constant) of the calibration
//! parameters, evaluated in the sampling coordinates (δ, log γ, log σ²).

use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};
use crate::quadrature::{binary_integral_i, continuous_integral_i, floored_ln, QuadratureConfig};
use crate::source_models::ResponseKind;
use crate::stats::normal_ln_density;

/// Prior `δ ~ N(1, delta_var)`, `log γ ~ N(a, b)`, `log σ² ~ N(c, d)`.
/// Variances, not standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorHyper {
    pub delta_var: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Default for PriorHyper {
    fn default() -> Self {
        Self {
            delta_var: 400.0,
            a: 0.0,
            b: 9.0,
            c: 0.0,
            d: 9.0,
        }
    }
}

impl PriorHyper {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.delta_var, self.a, self.b, self.c, self.d].iter().all(|v| v.is_finite());
        if !finite || !(self.delta_var > 0.0) || !(self.b > 0.0) || !(self.d > 0.0) {
            return Err(RecastError::Config("prior variances must be positive and finite".into()));
        }
        Ok(())
    }
}

pub const PRIOR_DELTA_MEAN: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousParams {
    pub delta: f64,
    pub log_gamma: f64,
    pub log_sigma2: f64,
}

impl ContinuousParams {
    pub fn from_natural(delta: f64, gamma: f64, sigma: f64) -> Self {
        Self {
            delta,
            log_gamma: gamma.ln(),
            log_sigma2: 2.0 * sigma.ln(),
        }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            log_gamma: x[1],
            log_sigma2: x[2],
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.delta, self.log_gamma, self.log_sigma2]
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }

    pub fn sigma(&self) -> f64 {
        (0.5 * self.log_sigma2).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryParams {
    pub delta: f64,
    pub log_gamma: f64,
}

impl BinaryParams {
    pub fn from_natural(delta: f64, gamma: f64) -> Self {
        Self {
            delta,
            log_gamma: gamma.ln(),
        }
    }

    pub fn from_slice(x: &[f64]) -> Self {
        Self {
            delta: x[0],
            log_gamma: x[1],
        }
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.delta, self.log_gamma]
    }

    pub fn gamma(&self) -> f64 {
        self.log_gamma.exp()
    }
}

/// Source scores on the target rows together with the target responses.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTarget {
    pub scores: Vec<f64>,
    pub labels: Vec<f64>,
    pub response: ResponseKind,
}

impl ScoredTarget {
    pub fn new(scores: Vec<f64>, labels: Vec<f64>, response: ResponseKind) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(RecastError::Dimension {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(RecastError::InvalidData(format!("non-finite source score at row {i}")));
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(RecastError::InvalidData(format!("non-finite response at row {i}")));
        }
        match response {
            ResponseKind::Continuous => {
                if let Some(index) = scores.iter().position(|&v| v == 0.0) {
                    return Err(RecastError::ZeroScore { index });
                }
            }
            ResponseKind::Binary => {
                if let Some(i) = labels.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(RecastError::InvalidData(format!("binary label at row {i} is not 0 or 1")));
                }
            }
        }
        Ok(Self { scores, labels, response })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Rows whose source score is exactly zero.
    pub fn zero_score_rows(scores: &[f64]) -> Vec<usize> {
        scores.iter().enumerate().filter(|(_, &v)| v == 0.0).map(|(i, _)| i).collect()
    }
}

/// A log-posterior value plus counts of numerical fallbacks taken while
/// computing it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LogPosterior {
    pub value: f64,
    /// Per-observation integrals that underflowed and were floored.
    pub floor_events: u64,
    /// Integrals that exhausted the subdivision budget; their last estimate
    /// was used.
    pub budget_events: u64,
}

pub fn log_prior_continuous(p: &ContinuousParams, hyper: &PriorHyper) -> f64 {
    normal_ln_density(p.delta, PRIOR_DELTA_MEAN, hyper.delta_var.sqrt())
        + normal_ln_density(p.log_gamma, hyper.a, hyper.b.sqrt())
        + normal_ln_density(p.log_sigma2, hyper.c, hyper.d.sqrt())
}

pub fn log_prior_binary(p: &BinaryParams, hyper: &PriorHyper) -> f64 {
    normal_ln_density(p.delta, PRIOR_DELTA_MEAN, hyper.delta_var.sqrt())
        + normal_ln_density(p.log_gamma, hyper.a, hyper.b.sqrt())
}

fn accumulate(acc: &mut LogPosterior, integral: Result<f64>) -> Result<()> {
    let value = match integral {
        Ok(v) => v,
        Err(RecastError::SubdivisionLimit { estimate, .. }) => {
            acc.budget_events += 1;
            estimate
        }
        Err(e) => return Err(e),
    };
    let (ln, floored) = floored_ln(value);
    acc.floor_events += u64::from(floored);
    acc.value += ln;
    Ok(())
}

/// Log prior plus `Σ log ∫ N(y_i | β f_i, σ²) Cauchy(β | δ, γ) dβ`.
pub fn log_posterior_continuous(
    p: &ContinuousParams,
    data: &ScoredTarget,
    hyper: &PriorHyper,
    cfg: &QuadratureConfig,
) -> Result<LogPosterior> {
    if data.response != ResponseKind::Continuous {
        return Err(RecastError::InvalidData("continuous posterior needs continuous responses".into()));
    }
    let (gamma, sigma) = (p.gamma(), p.sigma());
    let mut acc = LogPosterior::default();
    for (i, (&f, &y)) in data.scores.iter().zip(&data.labels).enumerate() {
        let r = continuous_integral_i(y, f, p.delta, gamma, sigma, cfg).map_err(|e| match e {
            RecastError::ZeroScore { .. } => RecastError::ZeroScore { index: i },
            other => other,
        });
        accumulate(&mut acc, r)?;
    }
    acc.value += log_prior_continuous(p, hyper);
    Ok(acc)
}

/// Log prior plus `Σ log ∫ Bernoulli(y_i | expit(β f_i)) Cauchy(β | δ, γ) dβ`.
pub fn log_posterior_binary(
    p: &BinaryParams,
    data: &ScoredTarget,
    hyper: &PriorHyper,
    cfg: &QuadratureConfig,
) -> Result<LogPosterior> {
    if data.response != ResponseKind::Binary {
        return Err(RecastError::InvalidData("binary posterior needs binary responses".into()));
    }
    let gamma = p.gamma();
    let mut acc = LogPosterior::default();
    for (&f, &y) in data.scores.iter().zip(&data.labels) {
        accumulate(&mut acc, binary_integral_i(y, f, p.delta, gamma, cfg))?;
    }
    acc.value += log_prior_binary(p, hyper);
    Ok(acc)
}
