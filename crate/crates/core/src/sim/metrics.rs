use crate::error::{RecastError, Result};
use crate::predictive::PredictionSet;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(RecastError::Dimension { expected: a, got: b })
    }
}

pub fn rmse(preds: &[f64], truths: &[f64]) -> Result<f64> {
    same_len(preds.len(), truths.len())?;
    if preds.is_empty() {
        return Err(RecastError::InvalidData("rmse of an empty set".into()));
    }
    let sse: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

/// Area under the ROC curve as the Mann–Whitney statistic
/// `(R₁ − n₁(n₁+1)/2) / (n₁n₀)`, with `R₁` the rank sum of the positives
/// and tied scores given their average rank.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    same_len(scores.len(), labels.len())?;
    let n1 = labels.iter().filter(|&&y| y == 1.0).count();
    let n0 = labels.iter().filter(|&&y| y == 0.0).count();
    if n1 + n0 != labels.len() {
        return Err(RecastError::InvalidData("AUC labels must be 0 or 1".into()));
    }
    if n1 == 0 || n0 == 0 {
        return Err(RecastError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average 1-based rank.
        let avg = 0.5 * ((i + 1) + (j + 1)) as f64;
        for &k in &order[i..=j] {
            if labels[k] == 1.0 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let (n1, n0) = (n1 as f64, n0 as f64);
    Ok((rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Fraction of truths inside their sets, per level. `sets[i][k]` is the set
/// for test point `i` at level `k`.
pub fn empirical_coverage(sets: &[Vec<PredictionSet>], truths: &[f64]) -> Result<Vec<f64>> {
    same_len(sets.len(), truths.len())?;
    if sets.is_empty() {
        return Err(RecastError::InvalidData("coverage of an empty set".into()));
    }
    let levels = sets[0].len();
    if sets.iter().any(|s| s.len() != levels) {
        return Err(RecastError::InvalidData("ragged prediction-set table".into()));
    }
    Ok((0..levels)
        .map(|k| {
            let hits = sets.iter().zip(truths).filter(|(s, &y)| s[k].contains(y)).count();
            hits as f64 / truths.len() as f64
        })
        .collect())
}

/// Nominal levels 0.50, 0.51, …, 0.99.
pub fn default_nominal_grid() -> Vec<f64> {
    (50..100).map(|k| f64::from(k) / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityPoint {
    pub nominal: f64,
    pub empirical: f64,
    /// Standard error of the mean across replicates.
    pub se: f64,
}

/// Mean empirical coverage across replicates at each nominal level.
/// `per_replicate[r][k]` is replicate `r`'s coverage at `nominal[k]`.
pub fn reliability_curve(nominal: &[f64], per_replicate: &[Vec<f64>]) -> Result<Vec<ReliabilityPoint>> {
    if per_replicate.is_empty() {
        return Err(RecastError::InvalidData("no replicates".into()));
    }
    for r in per_replicate {
        same_len(nominal.len(), r.len())?;
    }
    Ok(nominal
        .iter()
        .enumerate()
        .map(|(k, &level)| {
            let (mean, se) = mean_se(per_replicate.iter().map(|r| r[k]));
            ReliabilityPoint {
                nominal: level,
                empirical: mean,
                se,
            }
        })
        .collect())
}

/// Mean and standard error of the finite values; NaN when none.
pub fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn perfect_predictions() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn hand_enumerated_auc() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        // A tie between classes counts one half.
        assert_eq!(auc(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn null_auc_near_half() {
        let mut rng = Rng::new(3);
        let s: Vec<f64> = (0..5000).map(|_| rng.uniform_open01()).collect();
        let y: Vec<f64> = (0..5000).map(|_| f64::from(rng.uniform_open01() < 0.5)).collect();
        assert!((auc(&s, &y).unwrap() - 0.5).abs() < 0.02);
    }

    #[test]
    fn single_class_auc_fails() {
        assert_eq!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(RecastError::SingleClass));
    }

    #[test]
    fn coverage_counts() {
        let set = |lo, hi| PredictionSet::Interval { lo, hi, level: 0.9 };
        let sets = vec![vec![set(0.0, 1.0)], vec![set(0.0, 1.0)], vec![set(2.0, 3.0)], vec![set(0.0, 0.5)]];
        let cov = empirical_coverage(&sets, &[0.5, 1.0, 0.0, 0.7]).unwrap();
        assert_eq!(cov, vec![0.5]);
    }

    #[test]
    fn grid_and_curve() {
        let g = default_nominal_grid();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[45], g[49]), (0.5, 0.95, 0.99));
        let c = reliability_curve(&[0.5, 0.9], &[vec![0.4, 0.8], vec![0.6, 1.0]]).unwrap();
        assert!((c[0].empirical - 0.5).abs() < 1e-15 && (c[1].empirical - 0.9).abs() < 1e-15);
        assert!((c[0].se - 0.1).abs() < 1e-12);
    }
}
