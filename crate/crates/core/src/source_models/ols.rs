use nalgebra::DVector;

use super::{standardize_fit, Dataset, ModelParams, ResponseKind, SourceModel, Standardizer};
use crate::error::{RecastError, Result};

const MAX_CONDITION: f64 = 1e10;

/// Least squares on standardized features.
pub fn fit_ols(data: &Dataset) -> Result<SourceModel> {
    let s = standardize_fit(&data.x, data.intercept)?;
    fit_with(data, s)
}

/// Least squares on the features as given.
pub fn fit_ols_raw(data: &Dataset) -> Result<SourceModel> {
    fit_with(data, Standardizer::identity(data.p(), data.intercept))
}

fn fit_with(data: &Dataset, standardizer: Standardizer) -> Result<SourceModel> {
    if data.response != ResponseKind::Continuous {
        return Err(RecastError::InvalidData("least squares needs a continuous response".into()));
    }
    let (n, p) = (data.n(), data.p());
    if n < p {
        return Err(RecastError::RankDeficient(format!("{n} rows for {p} columns")));
    }
    let x = standardizer.apply(&data.x);
    let y = DVector::from_column_slice(&data.y);

    let qr = x.clone().qr();
    let r = qr.r();
    let sv = r.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(RecastError::RankDeficient(format!(
            "condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            smax / smin
        )));
    }
    let qty = qr.q().transpose() * &y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| RecastError::RankDeficient("singular triangular factor".into()))?;

    let resid = &y - &x * &coef;
    let dof = (n - p).max(1) as f64;
    let residual_sd = (resid.norm_squared() / dof).sqrt();

    Ok(SourceModel {
        response: ResponseKind::Continuous,
        standardizer,
        params: ModelParams::Linear {
            coef: coef.iter().copied().collect(),
            residual_sd,
        },
        n_fit: n,
    })
}
