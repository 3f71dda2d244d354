use nalgebra::{DMatrix, DVector};

use super::{standardize_fit, Dataset, ModelParams, ResponseKind, SourceModel, Standardizer};
use crate::error::{RecastError, Result};
use crate::stats::expit;

const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const MAX_NORM: f64 = 1e4;

/// Logistic regression by iteratively reweighted least squares on
/// standardized features. Fails with [`RecastError::Separation`] when the
/// classes are completely separable.
pub fn fit_logistic(data: &Dataset) -> Result<SourceModel> {
    let s = standardize_fit(&data.x, data.intercept)?;
    irls(data, s, 0.0)
}

pub fn fit_logistic_raw(data: &Dataset) -> Result<SourceModel> {
    irls(data, Standardizer::identity(data.p(), data.intercept), 0.0)
}

/// Ridge-penalized variant: maximizes `loglik − ridge/2·‖θ₋₀‖²` (the
/// intercept is not penalized). Always has a finite maximizer for
/// `ridge > 0`, separable or not.
pub fn fit_logistic_penalized(data: &Dataset, ridge: f64) -> Result<SourceModel> {
    if !(ridge > 0.0) {
        return Err(RecastError::Config("ridge penalty must be positive".into()));
    }
    let s = standardize_fit(&data.x, data.intercept)?;
    irls(data, s, ridge)
}

fn irls(data: &Dataset, standardizer: Standardizer, ridge: f64) -> Result<SourceModel> {
    if data.response != ResponseKind::Binary {
        return Err(RecastError::InvalidData("logistic regression needs a binary response".into()));
    }
    let ones = data.y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == data.n() {
        return Err(RecastError::InvalidData("both classes must be present".into()));
    }
    let x = standardizer.apply(&data.x);
    let (n, p) = (x.nrows(), x.ncols());
    let y = DVector::from_column_slice(&data.y);
    let penalized = |j: usize| if data.intercept && j == 0 { 0.0 } else { ridge };

    let mut theta = DVector::<f64>::zeros(p);
    let mut iterations = 0;
    for iter in 1..=MAX_ITER {
        iterations = iter;
        let eta = &x * &theta;
        let mu = eta.map(expit);

        if ridge == 0.0 && (0..n).all(|i| (2.0 * y[i] - 1.0) * eta[i] > 0.0) {
            return Err(RecastError::Separation { norm: theta.norm() });
        }

        let mut grad = x.transpose() * (&y - &mu);
        for j in 0..p {
            grad[j] -= penalized(j) * theta[j];
        }
        if grad.amax() < GRAD_TOL {
            break;
        }

        let w = mu.map(|m| m * (1.0 - m));
        let xw = DMatrix::from_fn(n, p, |r, c| x[(r, c)] * w[r]);
        let mut hess = x.transpose() * xw;
        for j in 0..p {
            hess[(j, j)] += penalized(j);
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None if ridge == 0.0 => return Err(RecastError::Separation { norm: theta.norm() }),
            None => {
                return Err(RecastError::RankDeficient("singular penalized information matrix".into()))
            }
        };
        theta += step;
        if !theta.iter().all(|v| v.is_finite()) || theta.norm() > MAX_NORM {
            return Err(RecastError::Separation { norm: theta.norm() });
        }
    }

    Ok(SourceModel {
        response: ResponseKind::Binary,
        standardizer,
        params: ModelParams::Logistic {
            coef: theta.iter().copied().collect(),
            iterations,
        },
        n_fit: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::stats::std_normal_sample;

    #[test]
    fn symmetric_data_has_zero_intercept() {
        // Each x appears once with label 1 and its mirror with label 0, plus
        // noise rows that break separation.
        let xs = [0.3, 1.1, -0.4, 2.0, 0.7];
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        for &v in &xs {
            rows.extend_from_slice(&[1.0, v]);
            ys.push(1.0);
            rows.extend_from_slice(&[1.0, -v]);
            ys.push(0.0);
            rows.extend_from_slice(&[1.0, v * 0.5]);
            ys.push(0.0);
            rows.extend_from_slice(&[1.0, -v * 0.5]);
            ys.push(1.0);
        }
        let x = DMatrix::from_row_slice(ys.len(), 2, &rows);
        let d = Dataset::new(x, ys, ResponseKind::Binary, true).unwrap();
        let m = fit_logistic_raw(&d).unwrap();
        let raw = m.raw_coefficients().unwrap();
        assert!(raw[0].abs() < 1e-10, "{raw:?}");
    }

    #[test]
    fn separated_data_is_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let d = Dataset::new(x, vec![0.0, 1.0], ResponseKind::Binary, false).unwrap();
        let e = fit_logistic_raw(&d).unwrap_err();
        assert!(matches!(e, RecastError::Separation { .. }));
        assert!(e.to_string().contains("separation"));
        // The penalized fit exists.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -2.0, 1.0, 1.0, 1.0, 2.0]);
        let d = Dataset::new(x, vec![0.0, 0.0, 1.0, 1.0], ResponseKind::Binary, true).unwrap();
        assert!(fit_logistic(&d).is_err());
        let m = fit_logistic_penalized(&d, 1.0).unwrap();
        assert!(m.score(&[1.0, 2.0]).unwrap() > 0.0);
    }

    #[test]
    fn recovers_truth_on_simulated_data() {
        let mut rng = Rng::new(99);
        let n = 1000;
        let p = 50;
        let truth: Vec<f64> = (0..p).map(|j| if j == 0 { 0.2 } else { 0.3 * std_normal_sample(&mut rng) }).collect();
        let x = DMatrix::from_fn(n, p, |_, c| if c == 0 { 1.0 } else { std_normal_sample(&mut rng) });
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let eta: f64 = (0..p).map(|j| x[(i, j)] * truth[j]).sum();
                f64::from(rng.uniform_open01() < expit(eta))
            })
            .collect();
        let d = Dataset::new(x, y, ResponseKind::Binary, true).unwrap();
        let m = fit_logistic(&d).unwrap();
        let raw = m.raw_coefficients().unwrap();
        let worst = raw.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst < 0.5, "max abs error {worst}");
        for i in 0..20 {
            let p = expit(m.score(&d.row(i)).unwrap());
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let d = Dataset::new(x, vec![1.0, 1.0], ResponseKind::Binary, false).unwrap();
        assert!(matches!(fit_logistic_raw(&d), Err(RecastError::InvalidData(_))));
    }
}
