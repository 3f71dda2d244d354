//! End-to-end calibration: posterior sampling for (δ, γ[, σ]) from scored
//! target data, then per-point predictive summaries.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};
use crate::mcmc::{run_rwmh, thin_chain, Chain, MhConfig};
use crate::posterior::{
    log_posterior_binary, log_posterior_continuous, BinaryParams, ContinuousParams, PriorHyper, ScoredTarget,
};
use crate::predictive::{
    binary_prediction_set, predict_binary, predict_continuous, sort_draws, summarize_sorted, PredictionSet,
};
use crate::quadrature::QuadratureConfig;
use crate::rng::Rng;
use crate::source_models::ResponseKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictiveConfig {
    pub n_beta: usize,
    pub n_y: usize,
}

impl Default for PredictiveConfig {
    fn default() -> Self {
        Self { n_beta: 300, n_y: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RecastConfig {
    pub prior: PriorHyper,
    pub quadrature: QuadratureConfig,
    pub mh: MhConfig,
    pub predictive: PredictiveConfig,
}

impl RecastConfig {
    /// Desk-scale preset: 20k-iteration chains and 100 draws per loop level.
    pub fn desk() -> Self {
        Self {
            mh: MhConfig::desk(),
            predictive: PredictiveConfig { n_beta: 100, n_y: 100 },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.quadrature.validate()?;
        self.mh.validate()?;
        if self.predictive.n_beta == 0 || self.predictive.n_y == 0 {
            return Err(RecastError::Config("n_beta and n_y must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PosteriorSample {
    Continuous(Vec<ContinuousParams>),
    Binary(Vec<BinaryParams>),
}

impl PosteriorSample {
    pub fn len(&self) -> usize {
        match self {
            PosteriorSample::Continuous(v) => v.len(),
            PosteriorSample::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn response(&self) -> ResponseKind {
        match self {
            PosteriorSample::Continuous(_) => ResponseKind::Continuous,
            PosteriorSample::Binary(_) => ResponseKind::Binary,
        }
    }

    pub fn deltas(&self) -> Vec<f64> {
        match self {
            PosteriorSample::Continuous(v) => v.iter().map(|p| p.delta).collect(),
            PosteriorSample::Binary(v) => v.iter().map(|p| p.delta).collect(),
        }
    }

    /// CSV with header `delta,log_gamma,log_sigma2` (continuous) or
    /// `delta,log_gamma` (binary), one thinned draw per row, values in
    /// shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match self {
            PosteriorSample::Continuous(v) => {
                writeln!(w, "delta,log_gamma,log_sigma2")?;
                for p in v {
                    writeln!(w, "{},{},{}", p.delta, p.log_gamma, p.log_sigma2)?;
                }
            }
            PosteriorSample::Binary(v) => {
                writeln!(w, "delta,log_gamma")?;
                for p in v {
                    writeln!(w, "{},{}", p.delta, p.log_gamma)?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let continuous = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
            ["delta", "log_gamma", "log_sigma2"] => true,
            ["delta", "log_gamma"] => false,
            _ => {
                return Err(RecastError::InvalidData(format!(
                    "posterior file header must be delta,log_gamma[,log_sigma2], got {}",
                    headers.join(",")
                )))
            }
        };
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| RecastError::InvalidData(format!("posterior file line {}: {e}", i + 2)))?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(RecastError::InvalidData(format!("posterior file line {}: non-finite value", i + 2)));
            }
            rows.push(vals);
        }
        if rows.is_empty() {
            return Err(RecastError::InvalidData("posterior file has no draws".into()));
        }
        Ok(if continuous {
            PosteriorSample::Continuous(rows.iter().map(|r| ContinuousParams::from_slice(r)).collect())
        } else {
            PosteriorSample::Binary(rows.iter().map(|r| BinaryParams::from_slice(r)).collect())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub posterior: PosteriorSample,
    pub chain: Chain,
}

/// Samples the calibration-parameter posterior and thins it to
/// `cfg.mh.n_post` draws.
pub fn calibrate(target: &ScoredTarget, cfg: &RecastConfig, rng: &mut Rng) -> Result<Calibration> {
    cfg.validate()?;
    match target.response {
        ResponseKind::Continuous => {
            let init = init_state(&cfg.mh.init, 3)?;
            let chain = run_rwmh(
                |x: &[f64]| log_posterior_continuous(&ContinuousParams::from_slice(x), target, &cfg.prior, &cfg.quadrature),
                &init,
                &cfg.mh,
                rng,
            )?;
            let thinned = thin_chain(&chain, cfg.mh.n_post)?;
            let posterior = PosteriorSample::Continuous(thinned.iter().map(|x| ContinuousParams::from_slice(x)).collect());
            Ok(Calibration { posterior, chain })
        }
        ResponseKind::Binary => {
            let init = init_state(&cfg.mh.init, 2)?;
            let chain = run_rwmh(
                |x: &[f64]| log_posterior_binary(&BinaryParams::from_slice(x), target, &cfg.prior, &cfg.quadrature),
                &init,
                &cfg.mh,
                rng,
            )?;
            let thinned = thin_chain(&chain, cfg.mh.n_post)?;
            let posterior = PosteriorSample::Binary(thinned.iter().map(|x| BinaryParams::from_slice(x)).collect());
            Ok(Calibration { posterior, chain })
        }
    }
}

fn init_state(init: &[f64], dim: usize) -> Result<Vec<f64>> {
    if init.len() < dim {
        return Err(RecastError::Config(format!("mh.init needs at least {dim} entries")));
    }
    Ok(init[..dim].to_vec())
}

/// Summary of the predictive law at one feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PointPrediction {
    /// Predictive median (continuous) or `p̃` (binary).
    pub point: f64,
    pub p_tilde: Option<f64>,
    /// One set per requested α, in input order.
    pub sets: Vec<PredictionSet>,
}

pub fn predict_point(
    posterior: &PosteriorSample,
    f_tilde: f64,
    alphas: &[f64],
    cfg: &PredictiveConfig,
    rng: &mut Rng,
) -> Result<PointPrediction> {
    match posterior {
        PosteriorSample::Continuous(sample) => {
            for &a in alphas {
                if !(a > 0.0 && a < 1.0) {
                    return Err(RecastError::Domain(format!("alpha must lie in (0, 1), got {a}")));
                }
            }
            let draws = predict_continuous(sample, f_tilde, cfg.n_beta, cfg.n_y, rng)?;
            let sorted = sort_draws(&draws.values);
            let (point, sets) = summarize_sorted(&sorted, alphas);
            Ok(PointPrediction {
                point,
                p_tilde: None,
                sets,
            })
        }
        PosteriorSample::Binary(sample) => {
            let draws = predict_binary(sample, f_tilde, cfg.n_beta, rng)?;
            let p = draws.p_tilde().expect("binary draws");
            let sets = alphas
                .iter()
                .map(|&a| binary_prediction_set(p, a))
                .collect::<Result<Vec<_>>>()?;
            Ok(PointPrediction {
                point: p,
                p_tilde: Some(p),
                sets,
            })
        }
    }
}
