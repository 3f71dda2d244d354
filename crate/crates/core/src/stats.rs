//! Probability primitives: Gaussian, Cauchy and log-normal laws, and the
//! Cauchy law of a ratio of two correlated centred Gaussians.

use std::f64::consts::{FRAC_1_PI, PI, SQRT_2};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf;

use crate::error::{RecastError, Result};
use crate::rng::Rng;

/// ln(2π)/2.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Location/scale of a Cauchy law. `gamma == 0` is the point mass at `delta`
/// and is only meaningful as a limit; densities and samplers reject it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyParams {
    pub delta: f64,
    pub gamma: f64,
}

impl CauchyParams {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        if !delta.is_finite() || !gamma.is_finite() || gamma < 0.0 {
            return Err(RecastError::Domain(format!(
                "invalid Cauchy parameters (delta = {delta}, gamma = {gamma})"
            )));
        }
        Ok(Self { delta, gamma })
    }

    fn require_proper(&self) -> Result<()> {
        if self.gamma > 0.0 && self.gamma.is_finite() && self.delta.is_finite() {
            Ok(())
        } else {
            Err(RecastError::Domain(format!(
                "Cauchy scale must be positive (gamma = {})",
                self.gamma
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianParams {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd > 0.0) || !sd.is_finite() {
            return Err(RecastError::Domain(format!(
                "invalid Gaussian parameters (mean = {mean}, sd = {sd})"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard() -> Self {
        Self { mean: 0.0, sd: 1.0 }
    }
}

/// Cauchy law of `(xᵀa)/(xᵀb)` for `x ~ N(0, I)`.
///
/// `delta = aᵀb/‖b‖²`, `gamma = ‖b‖⁻² √(‖b‖²‖a‖² − (aᵀb)²)`; the radicand is
/// clamped at zero so near-collinear inputs give the degenerate limit.
pub fn cauchy_ratio_params(a: &[f64], b: &[f64]) -> Result<CauchyParams> {
    if a.len() != b.len() {
        return Err(RecastError::Dimension {
            expected: b.len(),
            got: a.len(),
        });
    }
    if a.is_empty() {
        return Err(RecastError::Domain("empty vectors".into()));
    }
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if !(bb > 0.0) {
        return Err(RecastError::DegenerateDenominator);
    }
    let radicand = (bb * aa - ab * ab).max(0.0);
    CauchyParams::new(ab / bb, radicand.sqrt() / bb)
}

// Unchecked kernels for hot loops. Callers guarantee gamma > 0.

#[inline]
pub fn cauchy_density(x: f64, delta: f64, gamma: f64) -> f64 {
    let z = (x - delta) / gamma;
    FRAC_1_PI / (gamma * (1.0 + z * z))
}

#[inline]
pub fn cauchy_ln_density(x: f64, delta: f64, gamma: f64) -> f64 {
    let z = (x - delta) / gamma;
    -(PI * gamma).ln() - z.ln_1p_sq()
}

trait Ln1pSq {
    fn ln_1p_sq(self) -> f64;
}

impl Ln1pSq for f64 {
    // ln(1 + z²) without overflow for huge |z|.
    #[inline]
    fn ln_1p_sq(self) -> f64 {
        let a = self.abs();
        if a > 1e150 {
            2.0 * a.ln()
        } else {
            (a * a).ln_1p()
        }
    }
}

#[inline]
pub fn cauchy_quantile_unchecked(p: f64, delta: f64, gamma: f64) -> f64 {
    delta + gamma * (PI * (p - 0.5)).tan()
}

pub fn cauchy_pdf(params: CauchyParams, x: f64) -> Result<f64> {
    params.require_proper()?;
    Ok(cauchy_density(x, params.delta, params.gamma))
}

pub fn cauchy_ln_pdf(params: CauchyParams, x: f64) -> Result<f64> {
    params.require_proper()?;
    Ok(cauchy_ln_density(x, params.delta, params.gamma))
}

pub fn cauchy_cdf(params: CauchyParams, x: f64) -> Result<f64> {
    params.require_proper()?;
    Ok(0.5 + FRAC_1_PI * ((x - params.delta) / params.gamma).atan())
}

pub fn cauchy_quantile(params: CauchyParams, p: f64) -> Result<f64> {
    params.require_proper()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(RecastError::Domain(format!("quantile level {p} outside (0, 1)")));
    }
    Ok(cauchy_quantile_unchecked(p, params.delta, params.gamma))
}

/// Inverse-CDF draw: one uniform per variate.
pub fn cauchy_sample(rng: &mut Rng, params: CauchyParams) -> Result<f64> {
    params.require_proper()?;
    Ok(cauchy_sample_unchecked(rng, params.delta, params.gamma))
}

#[inline]
pub fn cauchy_sample_unchecked(rng: &mut Rng, delta: f64, gamma: f64) -> f64 {
    cauchy_quantile_unchecked(rng.uniform_open01(), delta, gamma)
}

#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

#[inline]
pub fn normal_ln_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

pub fn gaussian_pdf(params: GaussianParams, x: f64) -> f64 {
    std_normal_pdf((x - params.mean) / params.sd) / params.sd
}

pub fn gaussian_ln_pdf(params: GaussianParams, x: f64) -> f64 {
    normal_ln_density(x, params.mean, params.sd)
}

/// Φ(z).
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(RecastError::Domain(format!("quantile level {p} outside (0, 1)")));
    }
    let z = -SQRT_2 * erf::erfc_inv(2.0 * p);
    // One Newton step against the correctly rounded CDF.
    let dens = std_normal_pdf(z);
    if dens > 0.0 {
        Ok(z - (std_normal_cdf(z) - p) / dens)
    } else {
        Ok(z)
    }
}

pub fn gaussian_cdf(params: GaussianParams, x: f64) -> f64 {
    std_normal_cdf((x - params.mean) / params.sd)
}

pub fn gaussian_quantile(params: GaussianParams, p: f64) -> Result<f64> {
    Ok(params.mean + params.sd * std_normal_quantile(p)?)
}

#[inline]
pub fn std_normal_sample(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_sample(rng: &mut Rng, params: GaussianParams) -> f64 {
    params.mean + params.sd * std_normal_sample(rng)
}

/// Log-normal density with log-scale mean `log_mean` and sd `log_sd`;
/// zero for `x <= 0`.
pub fn lognormal_pdf(x: f64, log_mean: f64, log_sd: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    std_normal_pdf((x.ln() - log_mean) / log_sd) / (log_sd * x)
}

pub fn lognormal_ln_pdf(x: f64, log_mean: f64, log_sd: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    normal_ln_density(x.ln(), log_mean, log_sd) - x.ln()
}

pub fn lognormal_sample(rng: &mut Rng, log_mean: f64, log_sd: f64) -> f64 {
    (log_mean + log_sd * std_normal_sample(rng)).exp()
}

/// Inverse logit, evaluated without overflow on either tail.
#[inline]
pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
