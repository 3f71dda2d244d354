use nalgebra::DMatrix;

use crate::error::{RecastError, Result};
use crate::rng::Rng;
use crate::source_models::{Dataset, ResponseKind};
use crate::stats::{expit, std_normal_sample};

/// `θ_S = (−a, b)` with every component of `a` (first `⌊p/2⌋` entries) and
/// `b` drawn from Uniform(0.75, 5).
pub fn make_theta_source(p: usize, rng: &mut Rng) -> Vec<f64> {
    let half = p / 2;
    (0..p)
        .map(|j| {
            let u = 0.75 + 4.25 * rng.uniform_open01();
            if j < half {
                -u
            } else {
                u
            }
        })
        .collect()
}

/// `θ_T = θ_S + ε`, `ε ~ N(0, σ²_TL I)`. Returns `θ_S` unchanged when
/// `σ²_TL = 0`.
pub fn make_theta_target(theta_s: &[f64], sigma_tl2: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(sigma_tl2 >= 0.0) || !sigma_tl2.is_finite() {
        return Err(RecastError::Config(format!("sigma_tl2 must be >= 0, got {sigma_tl2}")));
    }
    if sigma_tl2 == 0.0 {
        return Ok(theta_s.to_vec());
    }
    let sd = sigma_tl2.sqrt();
    Ok(theta_s.iter().map(|t| t + sd * std_normal_sample(rng)).collect())
}

/// `X = [1 | Z]` with `Z` standard Gaussian. Continuous responses are
/// `Xθ + noise_sd·N(0, 1)`; binary responses are Bernoulli(expit(Xθ)).
pub fn gen_data(
    theta: &[f64],
    n: usize,
    response: ResponseKind,
    noise_sd: f64,
    rng: &mut Rng,
) -> Result<(Dataset, Vec<f64>)> {
    let p = theta.len();
    if p < 2 || n == 0 {
        return Err(RecastError::Config("need p >= 2 and n >= 1".into()));
    }
    if response == ResponseKind::Continuous && !(noise_sd >= 0.0) {
        return Err(RecastError::Config("noise_sd must be non-negative".into()));
    }
    // Row-major fill so a given seed yields the same rows regardless of n.
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = std_normal_sample(rng);
        }
    }
    let eta: Vec<f64> = (0..n).map(|i| (0..p).map(|j| x[(i, j)] * theta[j]).sum()).collect();
    let y: Vec<f64> = match response {
        ResponseKind::Continuous => eta.iter().map(|m| m + noise_sd * std_normal_sample(rng)).collect(),
        ResponseKind::Binary => eta
            .iter()
            .map(|&m| f64::from(rng.uniform_open01() < expit(m)))
            .collect(),
    };
    Ok((Dataset::new(x, y, response, true)?, eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_source_ranges_and_signs() {
        let t = make_theta_source(50, &mut Rng::new(1));
        assert!(t.iter().all(|v| v.abs() >= 0.75 && v.abs() <= 5.0));
        assert!(t[..25].iter().all(|&v| v < 0.0));
        assert!(t[25..].iter().all(|&v| v > 0.0));
        assert_eq!(t, make_theta_source(50, &mut Rng::new(1)));
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let s = make_theta_source(50, &mut Rng::new(2));
        assert_eq!(make_theta_target(&s, 0.0, &mut Rng::new(3)).unwrap(), s);
        assert!(make_theta_target(&s, -1.0, &mut Rng::new(3)).is_err());
    }

    #[test]
    fn perturbation_variance() {
        let s = vec![0.0; 50];
        let mut rng = Rng::new(4);
        let mut total = 0.0;
        for _ in 0..1000 {
            let t = make_theta_target(&s, 0.25, &mut rng).unwrap();
            total += t.iter().map(|v| v * v).sum::<f64>() / 50.0;
        }
        assert!((total / 1000.0 - 0.25).abs() < 0.01);
    }

    #[test]
    fn features_are_standard() {
        let theta = make_theta_source(50, &mut Rng::new(5));
        let (d, eta) = gen_data(&theta, 1000, ResponseKind::Continuous, 1.0, &mut Rng::new(6)).unwrap();
        for j in 1..50 {
            let c = d.x.column(j);
            let m = c.mean();
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 999.0).sqrt();
            assert!(m.abs() < 0.15 && (sd - 1.0).abs() < 0.1);
        }
        let resid: Vec<f64> = d.y.iter().zip(&eta).map(|(y, m)| y - m).collect();
        let sd = (resid.iter().map(|r| r * r).sum::<f64>() / 1000.0).sqrt();
        assert!((sd - 1.0).abs() < 0.06, "{sd}");
    }

    #[test]
    fn binary_balance_follows_intercept() {
        // Only the intercept is nonzero, so P(y = 1) = expit(θ₀).
        let mut theta = vec![0.0; 5];
        theta[0] = 1.2;
        let (d, _) = gen_data(&theta, 20_000, ResponseKind::Binary, 0.0, &mut Rng::new(7)).unwrap();
        let frac = d.y.iter().sum::<f64>() / 20_000.0;
        assert!((frac - expit(1.2)).abs() < 0.01);
    }
}
