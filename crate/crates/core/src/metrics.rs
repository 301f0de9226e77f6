//! Fairness and task metrics: kernel-smoothed GDP / GEO, kNN mutual
//! information, accuracy, average precision, MSE and MAE.

use alloc::vec::Vec;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::kernels::SmoothingKernel;
use crate::linalg::Matrix;
use crate::rng::CounterRng;

/// Default neighbor count of the kNN mutual-information estimator.
pub const DEFAULT_MI_NEIGHBORS: usize = 3;

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// `(1/n) Σ_i |m̂₋ᵢ(S_i) − ȳ₋ᵢ|`, with `m̂₋ᵢ` the leave-one-out
/// Nadaraya–Watson regression of `pred` on `S` and `ȳ₋ᵢ` the leave-one-out
/// mean. An anchor with no kernel mass contributes 0.
pub fn estimate_gdp(pred: &[f64], s: &[f64], kernel: &SmoothingKernel) -> Result<f64> {
    ensure_len("sensitive attribute vs predictions", pred.len(), s.len())?;
    let n = pred.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, actual: n });
    }
    check_finite(pred, "predictions")?;
    check_finite(s, "sensitive attribute")?;
    // both means shift equally, so work relative to one prediction; a
    // constant vector then gives exact zeros
    let reference = pred[0];
    let centered: Vec<f64> = pred.iter().map(|p| p - reference).collect();
    let total: f64 = centered.iter().sum();
    let mut gap = 0.0;
    for i in 0..n {
        let mut mass = 0.0;
        let mut weighted = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let w = kernel.weight(s[i], s[j]);
            mass += w;
            weighted += w * centered[j];
        }
        if mass > 0.0 {
            let loo_mean = (total - centered[i]) / (n - 1) as f64;
            gap += (weighted / mass - loo_mean).abs();
        }
    }
    Ok(gap / n as f64)
}

/// GDP restricted to the samples with `Y = 1`.
pub fn estimate_geo(pred: &[f64], s: &[f64], y: &[f64], kernel: &SmoothingKernel) -> Result<f64> {
    ensure_len("labels vs predictions", pred.len(), y.len())?;
    ensure_len("sensitive attribute vs predictions", pred.len(), s.len())?;
    let positives: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1.0).collect();
    if positives.len() < 2 {
        return Err(Error::InsufficientPositives {
            actual: positives.len(),
        });
    }
    let p: Vec<f64> = positives.iter().map(|&i| pred[i]).collect();
    let sp: Vec<f64> = positives.iter().map(|&i| s[i]).collect();
    estimate_gdp(&p, &sp, kernel)
}

/// Digamma function for positive arguments.
pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + libm::log(x) - 0.5 * inv - series
}

fn hash_values(values: &[f64], seed: u64) -> u64 {
    // FNV-1a over the bit patterns
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

/// Columns divided by their standard deviation, plus a jitter of relative
/// size 1e−10 to break ties.
fn standardize(columns: Vec<Vec<f64>>, rng: &mut CounterRng) -> Vec<Vec<f64>> {
    columns
        .into_iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            let scaled: Vec<f64> = if sd > 0.0 {
                col.iter().map(|v| v / sd).collect()
            } else {
                col
            };
            let amp = 1e-10 * (scaled.iter().map(|v| v.abs()).sum::<f64>() / n).max(1.0);
            scaled
                .into_iter()
                .map(|v| v + amp * (2.0 * rng.uniform() - 1.0))
                .collect()
        })
        .collect()
}

fn max_norm_distance(cols: &[Vec<f64>], i: usize, j: usize) -> f64 {
    cols.iter().fold(0.0, |m, c| m.max((c[i] - c[j]).abs()))
}

/// Kraskov–Stögbauer–Grassberger (algorithm 1) mutual information between a
/// scalar `u` and a vector variable `v` (rows of `v`), in nats, clamped at 0.
///
/// Both variables are scaled to unit standard deviation per coordinate and
/// jittered deterministically (seed from a hash of the data). Distances use
/// the max norm.
pub fn estimate_mi_knn(u: &[f64], v: &Matrix, k: usize) -> Result<f64> {
    let n = u.len();
    ensure_len("mutual information sample count", n, v.rows())?;
    if k == 0 || n <= k {
        return Err(invalid(alloc::format!("kNN mutual information needs n > k ≥ 1, got n = {n}, k = {k}")));
    }
    check_finite(u, "mutual information input")?;
    if !v.all_finite() {
        return Err(Error::NonFinite("mutual information input".into()));
    }
    let mut rng = CounterRng::new(hash_values(v.as_slice(), hash_values(u, 0)));
    let us = standardize(alloc::vec![u.to_vec()], &mut rng);
    let vs = standardize((0..v.cols()).map(|j| v.column(j)).collect(), &mut rng);

    let mut joint = Vec::with_capacity(n - 1);
    let mut sum_digamma = 0.0;
    for i in 0..n {
        joint.clear();
        joint.extend((0..n).filter(|&j| j != i).map(|j| {
            max_norm_distance(&us, i, j).max(max_norm_distance(&vs, i, j))
        }));
        let (_, kth, _) = joint.select_nth_unstable_by(k - 1, f64::total_cmp);
        let radius = *kth;
        let count_u = (0..n)
            .filter(|&j| j != i && max_norm_distance(&us, i, j) < radius)
            .count();
        let count_v = (0..n)
            .filter(|&j| j != i && max_norm_distance(&vs, i, j) < radius)
            .count();
        sum_digamma += digamma(count_u as f64 + 1.0) + digamma(count_v as f64 + 1.0);
    }
    let mi = digamma(n as f64) + digamma(k as f64) - sum_digamma / n as f64;
    Ok(mi.max(0.0))
}

/// Fraction of `prob > 0.5` agreeing with binary labels.
pub fn accuracy(prob: &[f64], y: &[f64]) -> Result<f64> {
    ensure_len("labels vs probabilities", prob.len(), y.len())?;
    if prob.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    let hits = prob
        .iter()
        .zip(y)
        .filter(|(&p, &t)| (p > 0.5) == (t == 1.0))
        .count();
    Ok(hits as f64 / prob.len() as f64)
}

/// Area under the step-interpolated precision–recall curve,
/// `Σ_k (R_k − R_{k−1}) P_k` over distinct score thresholds.
/// `None` when there are no positive labels.
pub fn average_precision(scores: &[f64], y: &[f64]) -> Result<Option<f64>> {
    ensure_len("labels vs scores", scores.len(), y.len())?;
    check_finite(scores, "scores")?;
    let positives = y.iter().filter(|&&t| t == 1.0).count();
    if positives == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut prev_recall = 0.0;
    let mut idx = 0;
    while idx < order.len() {
        let threshold = scores[order[idx]];
        while idx < order.len() && scores[order[idx]] == threshold {
            tp += (y[order[idx]] == 1.0) as usize;
            seen += 1;
            idx += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(Some(ap))
}

pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    ensure_len("targets vs predictions", pred.len(), y.len())?;
    if pred.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub fn mae(pred: &[f64], y: &[f64]) -> Result<f64> {
    ensure_len("targets vs predictions", pred.len(), y.len())?;
    if pred.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    Ok(pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::smoothing_weights;
    use std::vec;

    fn rbf(g: f64) -> SmoothingKernel {
        SmoothingKernel::rbf(g).unwrap()
    }

    #[test]
    fn gdp_of_constant_predictions_is_zero() {
        let s: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        assert_eq!(estimate_gdp(&[0.37; 30], &s, &rbf(0.1)).unwrap(), 0.0);
    }

    #[test]
    fn gdp_of_identity_predictions_is_large() {
        let s: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let v = estimate_gdp(&s, &s, &rbf(0.05)).unwrap();
        assert!(v > 0.1, "{v}");
    }

    #[test]
    fn gdp_matches_weight_matrix_route() {
        let mut rng = CounterRng::new(2);
        let n = 40;
        let s: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let w = smoothing_weights(&rbf(0.2), &s).unwrap();
        let mut expected = 0.0;
        for i in 0..n {
            let cond: f64 = (0..n).map(|j| w[(i, j)] * p[j]).sum();
            let marg: f64 = (0..n).filter(|&j| j != i).map(|j| p[j]).sum::<f64>() / (n - 1) as f64;
            expected += (cond - marg).abs();
        }
        let v = estimate_gdp(&p, &s, &rbf(0.2)).unwrap();
        assert!((v - expected / n as f64).abs() < 1e-12);
    }

    #[test]
    fn gdp_shift_invariant() {
        let mut rng = CounterRng::new(3);
        let s: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
        let p: Vec<f64> = (0..50).map(|_| rng.uniform()).collect();
        let shifted: Vec<f64> = p.iter().map(|v| v + 3.0).collect();
        let a = estimate_gdp(&p, &s, &rbf(0.1)).unwrap();
        let b = estimate_gdp(&shifted, &s, &rbf(0.1)).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn geo_with_all_positive_labels_equals_gdp() {
        let mut rng = CounterRng::new(4);
        let s: Vec<f64> = (0..20).map(|_| rng.uniform()).collect();
        let p: Vec<f64> = (0..20).map(|_| rng.uniform()).collect();
        assert_eq!(
            estimate_geo(&p, &s, &[1.0; 20], &rbf(0.1)).unwrap(),
            estimate_gdp(&p, &s, &rbf(0.1)).unwrap()
        );
        assert!(matches!(
            estimate_geo(&p, &s, &[0.0; 20], &rbf(0.1)),
            Err(Error::InsufficientPositives { actual: 0 })
        ));
    }

    #[test]
    fn digamma_reference_values() {
        // ψ(1) = −γ_E, ψ(n+1) = ψ(n) + 1/n, ψ(1/2) = −γ_E − 2 ln 2
        let euler = 0.577_215_664_901_532_9;
        assert!((digamma(1.0) + euler).abs() < 1e-13);
        assert!((digamma(4.0) - (-euler + 1.0 + 0.5 + 1.0 / 3.0)).abs() < 1e-13);
        assert!((digamma(0.5) - (-euler - 2.0 * core::f64::consts::LN_2)).abs() < 1e-13);
        assert!((digamma(1000.0) - 6.907_255_195_648_812).abs() < 1e-12);
    }

    #[test]
    fn average_precision_hand_example() {
        // scores 0.9(+) 0.8(−) 0.7(+) 0.1(−): AP = 0.5·1 + 0.5·(2/3)
        let ap = average_precision(&[0.9, 0.8, 0.7, 0.1], &[1.0, 0.0, 1.0, 0.0]).unwrap().unwrap();
        assert!((ap - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
        // all tied: precision is the positive rate
        let ap = average_precision(&[0.5; 4], &[1.0, 0.0, 0.0, 0.0]).unwrap().unwrap();
        assert!((ap - 0.25).abs() < 1e-15);
        assert_eq!(average_precision(&[0.1, 0.2], &[0.0, 0.0]).unwrap(), None);
    }

    #[test]
    fn task_metrics() {
        assert_eq!(accuracy(&[0.9, 0.2, 0.6], &[1.0, 0.0, 0.0]).unwrap(), 2.0 / 3.0);
        assert_eq!(mse(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), 2.5);
        assert_eq!(mae(&[1.0, 2.0], &[0.0, 4.0]).unwrap(), 1.5);
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn mi_rejects_too_few_samples() {
        let v = Matrix::column_vector(&[1.0, 2.0, 3.0]);
        assert!(estimate_mi_knn(&[1.0, 2.0, 3.0], &v, 3).is_err());
        assert!(estimate_mi_knn(&[1.0, 2.0, 3.0], &v, 0).is_err());
    }

    #[test]
    fn mi_deterministic() {
        let mut rng = CounterRng::new(9);
        let u = rng.normals(200);
        let v = Matrix::column_vector(&rng.normals(200));
        let a = estimate_mi_knn(&u, &v, 3).unwrap();
        assert_eq!(a, estimate_mi_knn(&u, &v, 3).unwrap());
        let _ = vec![0];
    }
}
