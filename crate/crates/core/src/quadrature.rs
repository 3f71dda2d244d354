//! Adaptive Gauss–Kronrod integration and the two per-observation marginal
//! likelihood integrals (Gaussian innovation, logistic link).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_1_PI, PI};

use serde::{Deserialize, Serialize};

use crate::error::{RecastError, Result};
use crate::stats::{cauchy_density, expit, std_normal_pdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Maximum number of panels alive at once.
    pub max_subdivisions: usize,
    /// Truncation half-width for the standardized continuous integral.
    pub continuous_bound: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 200,
            continuous_bound: 39.0,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(RecastError::Config("quadrature tolerances must be positive".into()));
        }
        if self.max_subdivisions == 0 {
            return Err(RecastError::Config("max_subdivisions must be at least 1".into()));
        }
        if !(self.continuous_bound >= 10.0) || !self.continuous_bound.is_finite() {
            return Err(RecastError::Config("continuous_bound must be finite and >= 10".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub err_est: f64,
}

// 21-point Kronrod extension of the 10-point Gauss rule (QUADPACK qk21).
// Odd indices of XGK are the Gauss abscissae.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    // Largest error first; ties broken by position for a deterministic order.
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

#[inline]
fn eval<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(RecastError::NonFiniteIntegrand { abscissa: x })
    }
}

fn gauss_kronrod21<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Panel> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = eval(f, center)?;
    let mut res_g = 0.0;
    let mut res_k = WGK[10] * fc;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = eval(f, center - dx)?;
        let f2 = eval(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel { lo, hi, value, err })
}

/// Integrates `f` over `[lo, hi]` by globally adaptive 21-point Gauss–Kronrod
/// bisection. Stops once the summed error estimate is within
/// `max(abs_tol, rel_tol·|value|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    cfg: &QuadratureConfig,
) -> Result<Quadrature> {
    integrate_with_breakpoints(f, &[lo, hi], cfg)
}

/// As [`integrate_adaptive`], seeded with the panels between consecutive
/// `points` (sorted, first and last are the limits). Breakpoints let narrow
/// features that the initial rule could straddle be resolved from the start.
pub fn integrate_with_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Quadrature> {
    if points.len() < 2 {
        return Err(RecastError::Domain("need at least two integration limits".into()));
    }
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
        return Err(RecastError::Domain(format!("invalid integration range [{lo}, {hi}]")));
    }
    if points.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RecastError::Domain("breakpoints must be strictly increasing".into()));
    }

    let mut heap = BinaryHeap::with_capacity(cfg.max_subdivisions + points.len());
    let mut value = 0.0;
    let mut err = 0.0;
    for w in points.windows(2) {
        let p = gauss_kronrod21(&f, w[0], w[1])?;
        value += p.value;
        err += p.err;
        heap.push(p);
    }

    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * value.abs());
        if err <= tol {
            break;
        }
        if heap.len() >= cfg.max_subdivisions.max(points.len() - 1 + 1) {
            return Err(RecastError::SubdivisionLimit { estimate: value, err_est: err });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if !(mid > worst.lo && mid < worst.hi) {
            // Panel cannot be split further in floating point.
            return Err(RecastError::SubdivisionLimit { estimate: value, err_est: err });
        }
        let left = gauss_kronrod21(&f, worst.lo, mid)?;
        let right = gauss_kronrod21(&f, mid, worst.hi)?;
        value += left.value + right.value - worst.value;
        err += left.err + right.err - worst.err;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum in positional order so the result does not depend on the
    // floating-point history of the running totals.
    let mut panels = heap.into_vec();
    panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let value = panels.iter().map(|p| p.value).sum();
    let err_est = panels.iter().map(|p| p.err).sum();
    Ok(Quadrature { value, err_est })
}

fn sorted_breakpoints(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = interior
        .into_iter()
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Location and scale of the Cauchy factor after standardizing by the
/// Gaussian innovation: `m = |f|/σ·(δ − y/f)`, `s = |f|·γ/σ`.
pub fn continuous_cauchy_coordinates(y: f64, f_score: f64, delta: f64, gamma: f64, sigma: f64) -> (f64, f64) {
    let af = f_score.abs();
    (af / sigma * (delta - y / f_score), af * gamma / sigma)
}

fn check_continuous(f_score: f64, gamma: f64, sigma: f64) -> Result<()> {
    if f_score == 0.0 {
        return Err(RecastError::ZeroScore { index: 0 });
    }
    if !(sigma > 0.0) || !(gamma > 0.0) || !sigma.is_finite() || !gamma.is_finite() {
        return Err(RecastError::Domain(format!(
            "continuous integral requires gamma > 0 and sigma > 0 (gamma = {gamma}, sigma = {sigma})"
        )));
    }
    Ok(())
}

/// Marginal density of one continuous response:
/// `∫ N(y | βf, σ²)·Cauchy(β | δ, γ) dβ`, evaluated in the standardized
/// coordinate `u = (β − y/f)·|f|/σ` and truncated to `[−B, B]` with
/// `B = cfg.continuous_bound`. The truncation error is at most `2φ(B)/σ`.
pub fn continuous_integral_i(
    y: f64,
    f_score: f64,
    delta: f64,
    gamma: f64,
    sigma: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let b = cfg.continuous_bound;
    continuous_integral_on(y, f_score, delta, gamma, sigma, -b, b, cfg)
}

/// [`continuous_integral_i`] on an explicit truncation window.
#[allow(clippy::too_many_arguments)]
pub fn continuous_integral_on(
    y: f64,
    f_score: f64,
    delta: f64,
    gamma: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_continuous(f_score, gamma, sigma)?;
    let (m, s) = continuous_cauchy_coordinates(y, f_score, delta, gamma, sigma);
    let inv_sigma = 1.0 / sigma;
    if s < 1e-13 {
        // Point-mass limit: the smoothing by the Cauchy factor changes the value by O(s).
        return Ok(if m > lo && m < hi { std_normal_pdf(m) * inv_sigma } else { 0.0 });
    }
    let integrand = |u: f64| std_normal_pdf(u) * cauchy_density(u, m, s) * inv_sigma;

    // Gaussian bulk plus a geometric ladder around the Cauchy peak.
    let mut interior = vec![-8.0, -4.0, 0.0, 4.0, 8.0, m];
    let mut offset = s;
    while offset < 2.0 * (hi - lo) {
        interior.push(m - offset);
        interior.push(m + offset);
        offset *= 10.0;
    }
    let pts = sorted_breakpoints(lo, hi, interior);
    Ok(integrate_with_breakpoints(integrand, &pts, cfg)?.value)
}

fn check_label(y: f64) -> Result<bool> {
    if y == 1.0 {
        Ok(true)
    } else if y == 0.0 {
        Ok(false)
    } else {
        Err(RecastError::Domain(format!("binary label must be 0 or 1, got {y}")))
    }
}

/// `∫ Bernoulli(y | expit(βf))·Cauchy(β | δ, γ) dβ`, computed on (0, 1)
/// through the Cauchy quantile map `β(t) = δ + γ·tan(π(t − ½))`. The mapped
/// integrand is bounded in [0, 1] and needs no truncation.
pub fn binary_integral_i(y: f64, f_score: f64, delta: f64, gamma: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let positive = check_label(y)?;
    if !(gamma > 0.0) || !gamma.is_finite() || !delta.is_finite() || !f_score.is_finite() {
        return Err(RecastError::Domain(format!(
            "binary integral requires finite delta, f and gamma > 0 (gamma = {gamma})"
        )));
    }
    if f_score == 0.0 {
        return Ok(0.5);
    }
    let sign = if positive { f_score } else { -f_score };
    let integrand = |t: f64| expit(sign * (delta + gamma * (PI * (t - 0.5)).tan()));

    // t at which β crosses a few multiples of the logistic width 1/|f|.
    let t_of_beta = |beta: f64| 0.5 + FRAC_1_PI * ((beta - delta) / gamma).atan();
    let width = 1.0 / f_score.abs();
    let interior = [0.0, -1.0, 1.0, -5.0, 5.0, -25.0, 25.0]
        .iter()
        .map(|k| t_of_beta(k * width))
        .chain([0.5]);
    let pts = sorted_breakpoints(0.0, 1.0, interior);
    let q = integrate_with_breakpoints(integrand, &pts, cfg)?;
    Ok(q.value.clamp(0.0, 1.0))
}

/// Logarithm of a per-observation integral, floored at the smallest positive
/// normal number. The flag reports whether the floor was applied.
pub fn floored_ln(value: f64) -> (f64, bool) {
    if value < f64::MIN_POSITIVE {
        (f64::MIN_POSITIVE.ln(), true)
    } else {
        (value.ln(), false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::std_normal_cdf;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn constant_and_sine() {
        let q = integrate_adaptive(|_| 1.0, 0.0, 1.0, &cfg()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-15);
        let q = integrate_adaptive(f64::sin, 0.0, PI, &cfg()).unwrap();
        assert!((q.value - 2.0).abs() < 1e-10);
        assert!(q.err_est >= 0.0);
    }

    #[test]
    fn normal_mass_on_truncated_window() {
        let exact = std_normal_cdf(39.0) - std_normal_cdf(-39.0);
        let q = integrate_adaptive(std_normal_pdf, -39.0, 39.0, &cfg()).unwrap();
        assert!((q.value - exact).abs() < 1e-12);
        assert!((q.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_integrand_names_abscissa() {
        let err = integrate_adaptive(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, &cfg()).unwrap_err();
        match err {
            RecastError::NonFiniteIntegrand { abscissa } => assert!(abscissa > 0.5),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn budget_exhaustion_carries_estimate() {
        let tight = QuadratureConfig {
            max_subdivisions: 2,
            rel_tol: 1e-15,
            abs_tol: 1e-300,
            ..cfg()
        };
        let err = integrate_adaptive(|x: f64| x.abs().sqrt(), -1.0, 1.0, &tight).unwrap_err();
        match err {
            RecastError::SubdivisionLimit { estimate, err_est } => {
                assert!((estimate - 4.0 / 3.0).abs() < 0.1);
                assert!(err_est > 0.0);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(integrate_adaptive(|x| x, 1.0, 0.0, &cfg()).is_err());
        assert!(integrate_adaptive(|x| x, 0.0, f64::INFINITY, &cfg()).is_err());
    }

    #[test]
    fn continuous_small_gamma_collapses_to_gaussian() {
        let v = continuous_integral_i(2.0, 2.0, 1.0, 1e-4, 1.0, &cfg()).unwrap();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-4, "{v}");
    }

    #[test]
    fn continuous_sign_symmetry() {
        for &(y, f, d, g, s) in &[(0.7, 1.3, 0.4, 0.2, 0.9), (-3.0, -2.0, 1.1, 0.05, 2.0), (10.0, 25.0, 0.98, 0.01, 0.5)] {
            let a = continuous_integral_i(y, f, d, g, s, &cfg()).unwrap();
            let b = continuous_integral_i(-y, f, -d, g, s, &cfg()).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn continuous_zero_score_error() {
        let e = continuous_integral_i(1.0, 0.0, 1.0, 1.0, 1.0, &cfg()).unwrap_err();
        assert!(e.to_string().contains("zero source score violates a.s. condition"));
        assert!(continuous_integral_i(1.0, 1.0, 1.0, 0.0, 1.0, &cfg()).is_err());
        assert!(continuous_integral_i(1.0, 1.0, 1.0, 1.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn continuous_matches_closed_form_voigt_limit() {
        // y = 0, f = 1, δ = 0, γ = 1, σ = 1: the marginal is the Voigt profile
        // at 0, exp(1/2)·erfc(1/√2)/√(2π).
        let v = continuous_integral_i(0.0, 1.0, 0.0, 1.0, 1.0, &cfg()).unwrap();
        let exact = (0.5f64).exp() * statrs::function::erf::erfc(1.0 / 2f64.sqrt()) / (2.0 * PI).sqrt();
        assert!((v - exact).abs() < 1e-10, "{v} vs {exact}");
    }

    #[test]
    fn binary_trivial_cases() {
        for y in [0.0, 1.0] {
            assert_eq!(binary_integral_i(y, 0.0, 3.0, 0.2, &cfg()).unwrap(), 0.5);
        }
        let v = binary_integral_i(1.0, 10.0, 0.0, 1.0, &cfg()).unwrap();
        assert!((v - 0.5).abs() < 1e-10, "{v}");
        assert!(binary_integral_i(0.5, 1.0, 0.0, 1.0, &cfg()).is_err());
        assert!(binary_integral_i(1.0, 1.0, 0.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn binary_labels_complement() {
        for &(f, d, g) in &[(1.5, 2.0, 0.5), (-22.0, 0.97, 0.003), (0.01, -40.0, 12.0), (3.0, 1e-3, 1e-6)] {
            let one = binary_integral_i(1.0, f, d, g, &cfg()).unwrap();
            let zero = binary_integral_i(0.0, f, d, g, &cfg()).unwrap();
            assert!((one + zero - 1.0).abs() < 1e-10, "{one} + {zero}");
        }
    }

    #[test]
    fn floor_flags_underflow() {
        assert_eq!(floored_ln(0.0), (f64::MIN_POSITIVE.ln(), true));
        assert_eq!(floored_ln(1.0), (0.0, false));
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(QuadratureConfig { continuous_bound: 5.0, ..cfg() }.validate().is_err());
        assert!(QuadratureConfig { rel_tol: 0.0, ..cfg() }.validate().is_err());
    }
}
