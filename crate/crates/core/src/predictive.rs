//! Posterior-predictive sampling, prediction sets and the plug-in
//! maximum-likelihood interval.

use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};
use crate::posterior::{BinaryParams, ContinuousParams};
use crate::rng::Rng;
use crate::stats::{cauchy_sample_unchecked, expit, std_normal_quantile, std_normal_sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawKind {
    /// Simulated responses.
    Continuous,
    /// `expit(β̃·f)` for each random-effect draw.
    BinaryProbabilities,
    /// Simulated 0/1 responses.
    BinaryLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub kind: DrawKind,
    pub values: Vec<f64>,
    pub n_post: usize,
    pub n_beta: usize,
    /// Responses per random-effect draw (1 for probabilities).
    pub n_y: usize,
}

impl PredictiveDraws {
    /// Predictive probability that the response is 1 (binary draws only).
    pub fn p_tilde(&self) -> Option<f64> {
        match self.kind {
            DrawKind::Continuous => None,
            _ => Some(self.values.iter().sum::<f64>() / self.values.len() as f64),
        }
    }
}

fn check_sample<T>(sample: &[T], n_beta: usize, n_y: usize) -> Result<()> {
    if sample.is_empty() {
        return Err(RecastError::InvalidData("empty posterior sample".into()));
    }
    if n_beta == 0 || n_y == 0 {
        return Err(RecastError::Config("n_beta and n_y must be positive".into()));
    }
    Ok(())
}

/// For every posterior triple, `n_beta` draws `β̃ ~ Cauchy(δ, γ)` and for
/// each of those `n_y` draws `Ỹ ~ N(β̃·f̃, σ²)`, in that loop order.
pub fn predict_continuous(
    sample: &[ContinuousParams],
    f_tilde: f64,
    n_beta: usize,
    n_y: usize,
    rng: &mut Rng,
) -> Result<PredictiveDraws> {
    check_sample(sample, n_beta, n_y)?;
    let mut values = Vec::with_capacity(sample.len() * n_beta * n_y);
    for p in sample {
        let (gamma, sigma) = (p.gamma(), p.sigma());
        for _ in 0..n_beta {
            let mean = cauchy_sample_unchecked(rng, p.delta, gamma) * f_tilde;
            for _ in 0..n_y {
                values.push(mean + sigma * std_normal_sample(rng));
            }
        }
    }
    Ok(PredictiveDraws {
        kind: DrawKind::Continuous,
        values,
        n_post: sample.len(),
        n_beta,
        n_y,
    })
}

// Largest double below one; keeps stored probabilities strictly inside (0, 1)
// when expit saturates.
const P_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

fn open_unit(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, P_MAX)
}

/// Binary predictive with the innermost Bernoulli loop integrated out:
/// stores `expit(β̃·f̃)` for each of the `n_post·n_beta` random-effect draws.
pub fn predict_binary(sample: &[BinaryParams], f_tilde: f64, n_beta: usize, rng: &mut Rng) -> Result<PredictiveDraws> {
    check_sample(sample, n_beta, 1)?;
    let mut values = Vec::with_capacity(sample.len() * n_beta);
    for p in sample {
        let gamma = p.gamma();
        for _ in 0..n_beta {
            values.push(open_unit(expit(cauchy_sample_unchecked(rng, p.delta, gamma) * f_tilde)));
        }
    }
    Ok(PredictiveDraws {
        kind: DrawKind::BinaryProbabilities,
        values,
        n_post: sample.len(),
        n_beta,
        n_y: 1,
    })
}

/// The literal triple loop: `n_y` Bernoulli responses per random-effect draw.
pub fn predict_binary_raw(
    sample: &[BinaryParams],
    f_tilde: f64,
    n_beta: usize,
    n_y: usize,
    rng: &mut Rng,
) -> Result<PredictiveDraws> {
    check_sample(sample, n_beta, n_y)?;
    let mut values = Vec::with_capacity(sample.len() * n_beta * n_y);
    for p in sample {
        let gamma = p.gamma();
        for _ in 0..n_beta {
            let prob = expit(cauchy_sample_unchecked(rng, p.delta, gamma) * f_tilde);
            for _ in 0..n_y {
                values.push(f64::from(rng.uniform_open01() < prob));
            }
        }
    }
    Ok(PredictiveDraws {
        kind: DrawKind::BinaryLabels,
        values,
        n_post: sample.len(),
        n_beta,
        n_y,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictionSet {
    Interval { lo: f64, hi: f64, level: f64 },
    Labels { zero: bool, one: bool, level: f64 },
}

impl PredictionSet {
    pub fn contains(&self, y: f64) -> bool {
        match *self {
            PredictionSet::Interval { lo, hi, .. } => lo <= y && y <= hi,
            PredictionSet::Labels { zero, one, .. } => (zero && y == 0.0) || (one && y == 1.0),
        }
    }

    pub fn level(&self) -> f64 {
        match *self {
            PredictionSet::Interval { level, .. } | PredictionSet::Labels { level, .. } => level,
        }
    }

    /// Compact text form: `[lo;hi]`, `{0}`, `{1}` or `{0,1}`.
    pub fn display(&self) -> String {
        match *self {
            PredictionSet::Interval { lo, hi, .. } => format!("[{lo};{hi}]"),
            PredictionSet::Labels { zero, one, .. } => match (zero, one) {
                (true, true) => "{0,1}".into(),
                (true, false) => "{0}".into(),
                _ => "{1}".into(),
            },
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RecastError::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Linear-interpolation quantile of sorted data: position `h = (N − 1)·q`,
/// value `x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋])` (0-based).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() || frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

pub fn sort_draws(draws: &[f64]) -> Vec<f64> {
    let mut v = draws.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

fn interval_sorted(sorted: &[f64], alpha: f64) -> PredictionSet {
    PredictionSet::Interval {
        lo: quantile_sorted(sorted, 0.5 * alpha),
        hi: quantile_sorted(sorted, 1.0 - 0.5 * alpha),
        level: 1.0 - alpha,
    }
}

/// Equal-tailed interval between the empirical `α/2` and `1 − α/2`
/// quantiles (see [`quantile_sorted`]).
pub fn interval_from_draws(draws: &[f64], alpha: f64) -> Result<PredictionSet> {
    intervals_from_draws(draws, &[alpha]).map(|mut v| v.remove(0))
}

/// [`interval_from_draws`] for several levels, sorting once.
pub fn intervals_from_draws(draws: &[f64], alphas: &[f64]) -> Result<Vec<PredictionSet>> {
    if draws.is_empty() {
        return Err(RecastError::InvalidData("no predictive draws".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let sorted = sort_draws(draws);
    Ok(alphas.iter().map(|&a| interval_sorted(&sorted, a)).collect())
}

/// Intervals plus the median from already sorted draws.
pub fn summarize_sorted(sorted: &[f64], alphas: &[f64]) -> (f64, Vec<PredictionSet>) {
    (
        quantile_sorted(sorted, 0.5),
        alphas.iter().map(|&a| interval_sorted(sorted, a)).collect(),
    )
}

/// Label set: `{0}` when `p̃ < 1 − p̃` and `1 − α ≤ 1 − p̃`; `{1}` when
/// `1 − p̃ ≤ p̃` and `1 − α ≤ p̃`; `{0, 1}` otherwise.
pub fn binary_prediction_set(p_tilde: f64, alpha: f64) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    if !(0.0..=1.0).contains(&p_tilde) {
        return Err(RecastError::Domain(format!("p_tilde must lie in [0, 1], got {p_tilde}")));
    }
    let level = 1.0 - alpha;
    let q = 1.0 - p_tilde;
    let (zero, one) = if p_tilde < q && level <= q {
        (true, false)
    } else if q <= p_tilde && level <= p_tilde {
        (false, true)
    } else {
        (true, true)
    };
    Ok(PredictionSet::Labels { zero, one, level })
}

/// Continuous: the predictive median. Binary: `p̃`.
pub fn point_prediction(draws: &PredictiveDraws) -> Result<f64> {
    if draws.values.is_empty() {
        return Err(RecastError::InvalidData("no predictive draws".into()));
    }
    Ok(match draws.kind {
        DrawKind::Continuous => {
            let mut v = draws.values.clone();
            let mid = (v.len() - 1) / 2;
            let (_, &mut a, right) = v.select_nth_unstable_by(mid, f64::total_cmp);
            if draws.values.len() % 2 == 1 {
                a
            } else {
                let b = right.iter().copied().fold(f64::INFINITY, f64::min);
                0.5 * (a + b)
            }
        }
        _ => draws.p_tilde().expect("binary draws"),
    })
}

/// Closed-form maximizers of `Π N(y_i | (γ v_i + δ)·s, σ²)`:
/// `γ̂ = Σ(v−v̄)(y−ȳ) / (s·Σ(v−v̄)²)`, `δ̂ = ȳ/s − v̄·γ̂`.
pub fn mle_delta_gamma(y: &[f64], v: &[f64], s: f64) -> Result<(f64, f64)> {
    if y.len() != v.len() {
        return Err(RecastError::Dimension {
            expected: y.len(),
            got: v.len(),
        });
    }
    if y.len() < 2 {
        return Err(RecastError::InvalidData("need at least two observations".into()));
    }
    if s == 0.0 || !s.is_finite() {
        return Err(RecastError::Domain("scale s must be finite and nonzero".into()));
    }
    let n = y.len() as f64;
    let vbar = v.iter().sum::<f64>() / n;
    let ybar = y.iter().sum::<f64>() / n;
    let svv: f64 = v.iter().map(|vi| (vi - vbar) * (vi - vbar)).sum();
    if !(svv > 0.0) {
        return Err(RecastError::DegenerateLatent);
    }
    let svy: f64 = v.iter().zip(y).map(|(vi, yi)| (vi - vbar) * (yi - ybar)).sum();
    let gamma = svy / (s * svv);
    let delta = ybar / s - vbar * gamma;
    Ok((delta, gamma))
}

/// `[Φ⁻¹(α/2)σ + β̃s, Φ⁻¹(1 − α/2)σ + β̃s]` with one draw
/// `β̃ ~ Cauchy(δ̂, |γ̂|)`; `β̃ = δ̂` when `γ̂ = 0`.
pub fn plugin_interval(
    delta_hat: f64,
    gamma_hat: f64,
    sigma: f64,
    s: f64,
    alpha: f64,
    rng: &mut Rng,
) -> Result<PredictionSet> {
    check_alpha(alpha)?;
    if !(sigma > 0.0) {
        return Err(RecastError::Domain("sigma must be positive".into()));
    }
    if s == 0.0 {
        return Err(RecastError::ZeroScore { index: 0 });
    }
    let beta = if gamma_hat == 0.0 {
        delta_hat
    } else {
        cauchy_sample_unchecked(rng, delta_hat, gamma_hat.abs())
    };
    let z = std_normal_quantile(1.0 - 0.5 * alpha)?;
    Ok(PredictionSet::Interval {
        lo: -z * sigma + beta * s,
        hi: z * sigma + beta * s,
        level: 1.0 - alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{binary_integral_i, QuadratureConfig};

    #[test]
    fn degenerate_limit_collapses() {
        let s = vec![ContinuousParams::from_natural(1.0, 1e-6, 1e-6); 5];
        let d = predict_continuous(&s, 4.0, 7, 3, &mut Rng::new(1)).unwrap();
        assert_eq!(d.values.len(), 5 * 7 * 3);
        // Cauchy tails can still escape; nearly all draws sit at δ·f.
        let near = d.values.iter().filter(|v| (*v - 4.0).abs() < 1e-4).count();
        assert!(near as f64 >= 0.97 * d.values.len() as f64);
    }

    #[test]
    fn symmetric_mixture_median() {
        let s = vec![ContinuousParams::from_natural(0.0, 1.0, 1.0)];
        let d = predict_continuous(&s, 1.0, 40_000, 10, &mut Rng::new(2)).unwrap();
        assert!(point_prediction(&d).unwrap().abs() < 0.02);
    }

    #[test]
    fn binary_examples() {
        let s = vec![BinaryParams::from_natural(0.7, 2.0); 4];
        let d = predict_binary(&s, 0.0, 50, &mut Rng::new(3)).unwrap();
        assert_eq!(d.p_tilde(), Some(0.5));
        let s = vec![BinaryParams::from_natural(0.0, 1.0); 100];
        let d = predict_binary(&s, 3.0, 300, &mut Rng::new(4)).unwrap();
        assert!((d.p_tilde().unwrap() - 0.5).abs() < 0.01);
        assert!(d.values.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn binary_matches_quadrature() {
        let s = vec![BinaryParams::from_natural(2.0, 0.5)];
        let n = 200_000;
        let d = predict_binary(&s, 1.5, n, &mut Rng::new(5)).unwrap();
        let p = d.p_tilde().unwrap();
        let var = d.values.iter().map(|v| (v - p).powi(2)).sum::<f64>() / (n - 1) as f64;
        let exact = binary_integral_i(1.0, 1.5, 2.0, 0.5, &QuadratureConfig::default()).unwrap();
        assert!((p - exact).abs() < 3.0 * (var / n as f64).sqrt(), "{p} vs {exact}");
        let raw = predict_binary_raw(&s, 1.5, 20_000, 10, &mut Rng::new(6)).unwrap();
        assert_eq!(raw.values.len(), 200_000);
        let pr = raw.p_tilde().unwrap();
        assert!((pr - exact).abs() < 3.0 * (exact * (1.0 - exact) / 200_000.0).sqrt() * 3.0);
    }

    #[test]
    fn interval_convention() {
        let draws: Vec<f64> = (1..=100).map(f64::from).collect();
        match interval_from_draws(&draws, 0.10).unwrap() {
            PredictionSet::Interval { lo, hi, level } => {
                assert!((lo - 5.95).abs() < 1e-12 && (hi - 95.05).abs() < 1e-12);
                assert!((level - 0.9).abs() < 1e-15);
            }
            _ => unreachable!(),
        }
        match interval_from_draws(&draws, 1e-9).unwrap() {
            PredictionSet::Interval { lo, hi, .. } => assert!((lo - 1.0).abs() < 1e-6 && (hi - 100.0).abs() < 1e-6),
            _ => unreachable!(),
        }
        assert_eq!(
            interval_from_draws(&[2.5; 10], 0.3).unwrap(),
            PredictionSet::Interval { lo: 2.5, hi: 2.5, level: 0.7 }
        );
    }

    #[test]
    fn interval_self_coverage() {
        let mut rng = Rng::new(8);
        let draws: Vec<f64> = (0..20_000).map(|_| std_normal_sample(&mut rng)).collect();
        for alpha in [0.05, 0.2, 0.5] {
            let set = interval_from_draws(&draws, alpha).unwrap();
            let inside = draws.iter().filter(|&&v| set.contains(v)).count() as f64 / 20_000.0;
            assert!((inside - (1.0 - alpha)).abs() <= 1.0 / (20_000f64).sqrt());
        }
    }

    #[test]
    fn eq6_examples() {
        let set = |p, a| binary_prediction_set(p, a).unwrap().display();
        assert_eq!(set(0.97, 0.05), "{1}");
        assert_eq!(set(0.90, 0.05), "{0,1}");
        assert_eq!(set(0.30, 0.50), "{0}");
        assert_eq!(set(0.5, 0.05), "{0,1}");
        assert_eq!(set(0.5, 0.5), "{1}");
    }

    #[test]
    fn median_robust_to_outlier() {
        let base: Vec<f64> = (0..101).map(|i| i as f64 * 0.1).collect();
        let mut dup = [base.clone(), base.clone()].concat();
        let d0 = PredictiveDraws { kind: DrawKind::Continuous, values: dup.clone(), n_post: 1, n_beta: 1, n_y: dup.len() };
        dup.push(1e12);
        let d1 = PredictiveDraws { values: dup, ..d0.clone() };
        let (a, b) = (point_prediction(&d0).unwrap(), point_prediction(&d1).unwrap());
        assert!((a - 5.0).abs() < 1e-12);
        assert!((b - a).abs() < 0.1);
    }

    #[test]
    fn mle_closed_form_examples() {
        let s = 2.5;
        let (d, g) = mle_delta_gamma(&[0.0, s, 2.0 * s], &[-1.0, 0.0, 1.0], s).unwrap();
        assert!((d - 1.0).abs() < 1e-15 && (g - 1.0).abs() < 1e-15);
        let (d, g) = mle_delta_gamma(&[3.0 * s; 4], &[0.1, -2.0, 0.4, 1.0], s).unwrap();
        assert!((d - 3.0).abs() < 1e-14 && g == 0.0);
        assert_eq!(mle_delta_gamma(&[1.0, 2.0], &[0.5, 0.5], s), Err(RecastError::DegenerateLatent));
    }

    #[test]
    fn plugin_interval_examples() {
        let mut rng = Rng::new(1);
        match plugin_interval(1.0, 0.0, 1.0, 2.0, 0.05, &mut rng).unwrap() {
            PredictionSet::Interval { lo, hi, .. } => {
                assert!((lo - (2.0 - 1.959963984540054)).abs() < 1e-12);
                assert!((hi - (2.0 + 1.959963984540054)).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
        for _ in 0..5 {
            match plugin_interval(0.3, -0.7, 1.7, 3.0, 0.5, &mut rng).unwrap() {
                PredictionSet::Interval { lo, hi, .. } => {
                    assert!((hi - lo - 2.0 * 0.6744897501960817 * 1.7).abs() < 1e-12)
                }
                _ => unreachable!(),
            }
        }
        assert!(plugin_interval(1.0, 0.0, 1.0, 0.0, 0.05, &mut rng).is_err());
    }
}
