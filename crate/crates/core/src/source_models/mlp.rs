use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{standardize_fit, Dataset, ModelParams, ResponseKind, SourceModel};
use crate::error::{RecastError, Result};
use crate::rng::{mix64, Rng};
use crate::stats::expit;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub calibration_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 25,
            epochs: 2500,
            calibration_fraction: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.epochs == 0 {
            return Err(RecastError::Config("mlp hidden and epochs must be at least 1".into()));
        }
        if !(self.calibration_fraction > 0.0 && self.calibration_fraction < 1.0) {
            return Err(RecastError::Config("calibration_fraction must lie in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(RecastError::Config("learning_rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(RecastError::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Weights of a `p → hidden (ReLU) → 1` network. `w1` is row-major
/// `hidden × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub p: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    /// Output before any link. For binary networks this is the logit.
    pub fn forward(&self, z: &[f64]) -> f64 {
        let mut out = self.b2;
        for k in 0..self.hidden {
            let row = &self.w1[k * self.p..(k + 1) * self.p];
            let pre: f64 = self.b1[k] + row.iter().zip(z).map(|(w, v)| w * v).sum::<f64>();
            if pre > 0.0 {
                out += self.w2[k] * pre;
            }
        }
        out
    }

    /// Hash of the first-layer bit patterns.
    pub fn layer1_fingerprint(&self) -> u64 {
        self.w1
            .iter()
            .chain(&self.b1)
            .fold(mix64(self.p as u64 ^ ((self.hidden as u64) << 32)), |h, v| {
                mix64(h ^ v.to_bits())
            })
    }

    fn w1_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.hidden, self.p, &self.w1)
    }

    fn from_parts(w1: &DMatrix<f64>, b1: &DVector<f64>, w2: &DVector<f64>, b2: f64) -> Self {
        let (hidden, p) = w1.shape();
        let mut rows = Vec::with_capacity(hidden * p);
        for k in 0..hidden {
            rows.extend(w1.row(k).iter());
        }
        Self {
            p,
            hidden,
            w1: rows,
            b1: b1.iter().copied().collect(),
            w2: w2.iter().copied().collect(),
            b2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Calibration loss before training (index 0) and after each epoch.
    pub calibration_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, param: &mut [f64], grad: &[f64], t: i32, cfg: &MlpConfig) {
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..param.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grad[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            param[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Shuffled (train, calibration) row indices.
fn split(n: usize, frac: f64, rng: &mut Rng) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(RecastError::InvalidData(format!(
            "network training needs at least 10 rows, got {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_cal = ((frac * n as f64).round() as usize).clamp(1, n - 1);
    let cal = idx[..n_cal].to_vec();
    let train = idx[n_cal..].to_vec();
    Ok((train, cal))
}

fn rows(z: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), z.ncols(), |r, c| z[(idx[r], c)])
}

fn hidden_activations(z: &DMatrix<f64>, w1: &DMatrix<f64>, b1: &DVector<f64>) -> DMatrix<f64> {
    let mut h = z * w1.transpose();
    for (k, mut col) in h.column_iter_mut().enumerate() {
        col.add_scalar_mut(b1[k]);
    }
    h
}

/// Mean squared error on the output scale, plus dLoss/dOutput per row.
fn loss_and_grad(out: &DVector<f64>, y: &DVector<f64>, binary: bool) -> (f64, DVector<f64>) {
    let n = out.len() as f64;
    let mut loss = 0.0;
    let grad = DVector::from_fn(out.len(), |i, _| {
        if binary {
            let p = expit(out[i]);
            let r = p - y[i];
            loss += r * r;
            2.0 * r * p * (1.0 - p) / n
        } else {
            let r = out[i] - y[i];
            loss += r * r;
            2.0 * r / n
        }
    });
    (loss / n, grad)
}

fn output(a: &DMatrix<f64>, w2: &DVector<f64>, b2: f64) -> DVector<f64> {
    let mut out = a * w2;
    out.add_scalar_mut(b2);
    out
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(RecastError::NonFiniteLoss { epoch })
    }
}

/// Fully-connected `p → hidden → 1` ReLU network with Xavier-uniform
/// weights, trained full batch with Adam on mean squared error. The returned
/// weights come from the epoch with the lowest calibration loss.
pub fn fit_mlp(data: &Dataset, cfg: &MlpConfig, rng: &mut Rng) -> Result<SourceModel> {
    fit_mlp_with_report(data, cfg, rng).map(|(m, _)| m)
}

pub fn fit_mlp_with_report(
    data: &Dataset,
    cfg: &MlpConfig,
    rng: &mut Rng,
) -> Result<(SourceModel, TrainingReport)> {
    cfg.validate()?;
    let binary = data.response == ResponseKind::Binary;
    let standardizer = standardize_fit(&data.x, data.intercept)?;
    let z = standardizer.apply(&data.x);
    let (train, cal) = split(data.n(), cfg.calibration_fraction, rng)?;

    let (p, h) = (data.p(), cfg.hidden);
    let bound1 = (6.0 / (p + h) as f64).sqrt();
    let bound2 = (6.0 / (h + 1) as f64).sqrt();
    let mut w1 = DMatrix::from_fn(h, p, |_, _| (2.0 * rng.uniform_open01() - 1.0) * bound1);
    let mut w2 = DVector::from_fn(h, |_, _| (2.0 * rng.uniform_open01() - 1.0) * bound2);
    let mut b1 = DVector::<f64>::zeros(h);
    let mut b2 = 0.0;

    let zt = rows(&z, &train);
    let zc = rows(&z, &cal);
    let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| data.y[i]));
    let yc = DVector::from_iterator(cal.len(), cal.iter().map(|&i| data.y[i]));

    let cal_loss = |w1: &DMatrix<f64>, b1: &DVector<f64>, w2: &DVector<f64>, b2: f64| {
        let a = hidden_activations(&zc, w1, b1).map(|v| v.max(0.0));
        loss_and_grad(&output(&a, w2, b2), &yc, binary).0
    };

    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let first = cal_loss(&w1, &b1, &w2, b2);
    check_finite(first, 0)?;
    trace.push(first);
    let mut best = (0, first, MlpParams::from_parts(&w1, &b1, &w2, b2));

    let mut opt_w1 = Adam::new(h * p);
    let mut opt_b1 = Adam::new(h);
    let mut opt_w2 = Adam::new(h);
    let mut opt_b2 = Adam::new(1);

    for epoch in 1..=cfg.epochs {
        let pre = hidden_activations(&zt, &w1, &b1);
        let a = pre.map(|v| v.max(0.0));
        let (train_loss, d_out) = loss_and_grad(&output(&a, &w2, b2), &yt, binary);
        check_finite(train_loss, epoch)?;

        let g_w2 = a.transpose() * &d_out;
        let g_b2 = d_out.sum();
        let mut d_pre = &d_out * w2.transpose();
        d_pre.zip_apply(&pre, |d, s| {
            if s <= 0.0 {
                *d = 0.0
            }
        });
        let g_w1 = d_pre.transpose() * &zt;
        let g_b1 = DVector::from_iterator(h, d_pre.column_iter().map(|c| c.sum()));

        let t = epoch as i32;
        opt_w1.step(w1.as_mut_slice(), g_w1.as_slice(), t, cfg);
        opt_b1.step(b1.as_mut_slice(), g_b1.as_slice(), t, cfg);
        opt_w2.step(w2.as_mut_slice(), g_w2.as_slice(), t, cfg);
        opt_b2.step(std::slice::from_mut(&mut b2), &[g_b2], t, cfg);

        let loss = cal_loss(&w1, &b1, &w2, b2);
        check_finite(loss, epoch)?;
        trace.push(loss);
        if loss < best.1 {
            best = (epoch, loss, MlpParams::from_parts(&w1, &b1, &w2, b2));
        }
    }

    let report = TrainingReport {
        calibration_trace: trace,
        best_epoch: best.0,
        best_loss: best.1,
    };
    let model = SourceModel {
        response: data.response,
        standardizer,
        params: ModelParams::Mlp(best.2),
        n_fit: data.n(),
    };
    Ok((model, report))
}

/// Retrains only the output layer of `src` on `target`, starting from the
/// source weights. The source standardizer is kept.
pub fn unfreeze_last_layer(src: &SourceModel, target: &Dataset, cfg: &MlpConfig, rng: &mut Rng) -> Result<SourceModel> {
    unfreeze_last_layer_with_report(src, target, cfg, rng).map(|(m, _)| m)
}

pub fn unfreeze_last_layer_with_report(
    src: &SourceModel,
    target: &Dataset,
    cfg: &MlpConfig,
    rng: &mut Rng,
) -> Result<(SourceModel, TrainingReport)> {
    cfg.validate()?;
    let net = match &src.params {
        ModelParams::Mlp(net) => net,
        _ => return Err(RecastError::Config(format!("cannot unfreeze a {} model", src.kind()))),
    };
    if target.p() != net.p {
        return Err(RecastError::Dimension {
            expected: net.p,
            got: target.p(),
        });
    }
    if target.response != src.response {
        return Err(RecastError::InvalidData("target response kind differs from source".into()));
    }
    let binary = target.response == ResponseKind::Binary;
    let (train, cal) = split(target.n(), cfg.calibration_fraction, rng)?;

    // Layer 1 is frozen, so hidden activations are computed once.
    let z = src.standardizer.apply(&target.x);
    let w1 = net.w1_matrix();
    let b1 = DVector::from_column_slice(&net.b1);
    let a_all = hidden_activations(&z, &w1, &b1).map(|v| v.max(0.0));
    let at = rows(&a_all, &train);
    let ac = rows(&a_all, &cal);
    let yt = DVector::from_iterator(train.len(), train.iter().map(|&i| target.y[i]));
    let yc = DVector::from_iterator(cal.len(), cal.iter().map(|&i| target.y[i]));

    let mut w2 = DVector::from_column_slice(&net.w2);
    let mut b2 = net.b2;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let first = loss_and_grad(&output(&ac, &w2, b2), &yc, binary).0;
    check_finite(first, 0)?;
    trace.push(first);
    let mut best = (0, first, w2.clone(), b2);

    let mut opt_w2 = Adam::new(net.hidden);
    let mut opt_b2 = Adam::new(1);
    for epoch in 1..=cfg.epochs {
        let (train_loss, d_out) = loss_and_grad(&output(&at, &w2, b2), &yt, binary);
        check_finite(train_loss, epoch)?;
        let g_w2 = at.transpose() * &d_out;
        let g_b2 = d_out.sum();
        let t = epoch as i32;
        opt_w2.step(w2.as_mut_slice(), g_w2.as_slice(), t, cfg);
        opt_b2.step(std::slice::from_mut(&mut b2), &[g_b2], t, cfg);

        let loss = loss_and_grad(&output(&ac, &w2, b2), &yc, binary).0;
        check_finite(loss, epoch)?;
        trace.push(loss);
        if loss < best.1 {
            best = (epoch, loss, w2.clone(), b2);
        }
    }

    let params = MlpParams {
        w2: best.2.iter().copied().collect(),
        b2: best.3,
        ..net.clone()
    };
    let report = TrainingReport {
        calibration_trace: trace,
        best_epoch: best.0,
        best_loss: best.1,
    };
    let model = SourceModel {
        response: src.response,
        standardizer: src.standardizer.clone(),
        params: ModelParams::Mlp(params),
        n_fit: target.n(),
    };
    Ok((model, report))
}
