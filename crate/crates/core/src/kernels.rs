//! Smoothing kernels on the sensitive attribute, the RBF kernel on the
//! representation space, and the centered weight matrices built from them.
//!
//! For anchor `i` the smoothing weights are
//!
//! ```text
//! ŵ(j; i) = K_γ(S_i, S_j) / Σ_{j'≠i} K_γ(S_i, S_j')      (j ≠ i)
//! ```
//!
//! and the centered weight matrix is `A_ij = ŵ(j; i) − 1/(n−1)` off the
//! diagonal, `0` on it. Row `i` of `A` is the signed measure
//! `P̂(Z | S = S_i) − P̂(Z)` (both leaving out sample `i`), so every quadratic
//! form `a_iᵀ K a_i` with the representation Gram matrix `K` is a squared MMD.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// Base function `k` of a smoothing kernel `K_γ(s, s') = k((s − s')/γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothingFamily {
    /// `exp(−u²/2)/√(2π)`
    Rbf,
    /// `max(0, 1 − |u|)`
    Triangular,
    /// `0.75(1 − u²)` on `|u| ≤ 1`
    Epanechnikov,
}

impl SmoothingFamily {
    pub const ALL: [SmoothingFamily; 3] = [Self::Rbf, Self::Triangular, Self::Epanechnikov];

    #[inline]
    pub fn base(self, u: f64) -> f64 {
        match self {
            Self::Rbf => libm::exp(-0.5 * u * u) / libm::sqrt(2.0 * PI),
            Self::Triangular => (1.0 - u.abs()).max(0.0),
            Self::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Standard deviation of `k` viewed as a density. Used to compare
    /// families at matched effective bandwidth.
    pub fn base_std(self) -> f64 {
        match self {
            Self::Rbf => 1.0,
            Self::Triangular => libm::sqrt(1.0 / 6.0),
            Self::Epanechnikov => libm::sqrt(1.0 / 5.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rbf => "rbf",
            Self::Triangular => "triangular",
            Self::Epanechnikov => "epanechnikov",
        }
    }
}

impl core::str::FromStr for SmoothingFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" => Ok(Self::Rbf),
            "triangular" | "triangle" => Ok(Self::Triangular),
            "epanechnikov" => Ok(Self::Epanechnikov),
            _ => Err(invalid("unknown smoothing kernel family")),
        }
    }
}

/// The smoothing kernel `K_γ` on sensitive-attribute values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingKernel {
    family: SmoothingFamily,
    bandwidth: f64,
}

impl SmoothingKernel {
    pub fn new(family: SmoothingFamily, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(invalid("smoothing bandwidth must be positive and finite"));
        }
        Ok(Self { family, bandwidth })
    }

    pub fn rbf(bandwidth: f64) -> Result<Self> {
        Self::new(SmoothingFamily::Rbf, bandwidth)
    }

    pub fn family(&self) -> SmoothingFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn eval(&self, s: f64, s_prime: f64) -> Result<f64> {
        if !(s.is_finite() && s_prime.is_finite()) {
            return Err(invalid("smoothing kernel arguments must be finite"));
        }
        Ok(self.weight(s, s_prime))
    }

    #[inline]
    pub(crate) fn weight(&self, s: f64, s_prime: f64) -> f64 {
        self.family.base((s - s_prime) / self.bandwidth)
    }
}

/// RBF kernel `κ(z, z') = exp(−‖z − z'‖² / 2σ²)` on the representation space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdKernel {
    scale: f64,
}

impl MmdKernel {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid("MMD kernel scale must be positive and finite"));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn eval(&self, z: &[f64], z_prime: &[f64]) -> Result<f64> {
        ensure_len("mmd kernel arguments", z.len(), z_prime.len())?;
        Ok(self.eval_unchecked(z, z_prime))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z: &[f64], z_prime: &[f64]) -> f64 {
        libm::exp(-squared_distance(z, z_prime) / (2.0 * self.scale * self.scale))
    }

    /// Gram matrix over the rows of `z`.
    pub fn gram(&self, z: &Matrix) -> Result<Matrix> {
        if z.rows() == 0 {
            return Err(Error::InsufficientSamples {
                needed: 1,
                actual: 0,
            });
        }
        let n = z.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = 1.0;
            for j in 0..i {
                let v = self.eval_unchecked(z.row(i), z.row(j));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WeightKind {
    DemographicParity,
    EqualOpportunity,
}

/// Centered smoothing-weight matrix `A_γ` (or its label-masked variant `Ã_γ`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: Matrix,
    kind: WeightKind,
    /// Anchors whose row enters the estimator (all of them for DP, the
    /// label-1 samples for EO).
    anchors: Vec<usize>,
}

impl WeightMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn anchors(&self) -> &[usize] {
        &self.anchors
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        self.entries.row(i)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(alloc::format!("{what} contains non-finite values")))
    }
}

/// Leave-one-out smoothing weights `ŵ(j; i)`, restricted to columns where
/// `eligible[j]` holds. Rows whose kernel mass is zero fall back to uniform
/// weights over the eligible columns. Row `i` is only filled when `eligible[i]`.
fn masked_smoothing_weights(kernel: &SmoothingKernel, s: &[f64], eligible: &[bool]) -> Matrix {
    let n = s.len();
    let pool = eligible.iter().filter(|&&e| e).count();
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        if !eligible[i] {
            continue;
        }
        let row = w.row_mut(i);
        let mut mass = 0.0;
        for j in 0..n {
            if j != i && eligible[j] {
                let k = kernel.weight(s[i], s[j]);
                row[j] = k;
                mass += k;
            }
        }
        if mass > 0.0 {
            row.iter_mut().for_each(|v| *v /= mass);
        } else {
            let uniform = 1.0 / (pool - 1) as f64;
            for j in 0..n {
                row[j] = if j != i && eligible[j] { uniform } else { 0.0 };
            }
        }
    }
    w
}

/// Leave-one-out smoothing weights `ŵ(j; i)`; each row sums to one.
pub fn smoothing_weights(kernel: &SmoothingKernel, s: &[f64]) -> Result<Matrix> {
    if s.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            actual: s.len(),
        });
    }
    check_finite(s, "sensitive attribute")?;
    Ok(masked_smoothing_weights(kernel, s, &vec![true; s.len()]))
}

fn center(weights: Matrix, eligible: &[bool], pool: usize) -> Matrix {
    let n = weights.rows();
    let uniform = 1.0 / (pool - 1) as f64;
    let mut a = weights;
    for i in 0..n {
        let row = a.row_mut(i);
        if !eligible[i] {
            row.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        for j in 0..n {
            row[j] = if j != i && eligible[j] {
                row[j] - uniform
            } else {
                0.0
            };
        }
    }
    a
}

/// `A_γ`: smoothing weights minus the leave-one-out uniform weight `1/(n−1)`.
pub fn centered_weight_matrix(kernel: &SmoothingKernel, s: &[f64]) -> Result<WeightMatrix> {
    let n = s.len();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            actual: n,
        });
    }
    check_finite(s, "sensitive attribute")?;
    let eligible = vec![true; n];
    let entries = center(masked_smoothing_weights(kernel, s, &eligible), &eligible, n);
    Ok(WeightMatrix {
        entries,
        kind: WeightKind::DemographicParity,
        anchors: (0..n).collect(),
    })
}

pub(crate) fn positive_mask(y: &[f64]) -> Result<Vec<bool>> {
    check_finite(y, "labels")?;
    Ok(y.iter().map(|&v| v == 1.0).collect())
}

/// `Ã_γ`: the centered weights computed among label-1 samples only.
///
/// Columns `j` with `Y_j ≠ 1` are zero. Rows of anchors with `Y_i ≠ 1` never
/// enter the EO estimator and are stored as zero, so every row sums to zero.
pub fn eo_centered_weight_matrix(
    kernel: &SmoothingKernel,
    s: &[f64],
    y: &[f64],
) -> Result<WeightMatrix> {
    ensure_len("labels", s.len(), y.len())?;
    check_finite(s, "sensitive attribute")?;
    let eligible = positive_mask(y)?;
    let pool = eligible.iter().filter(|&&e| e).count();
    if pool < 2 {
        return Err(Error::InsufficientPositives { actual: pool });
    }
    let entries = center(masked_smoothing_weights(kernel, s, &eligible), &eligible, pool);
    Ok(WeightMatrix {
        entries,
        kind: WeightKind::EqualOpportunity,
        anchors: (0..s.len()).filter(|&i| eligible[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::vec::Vec;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn smoothing_kernel_closed_forms() {
        let rbf = SmoothingKernel::rbf(1.0).unwrap();
        assert!(approx(rbf.eval(0.0, 0.0).unwrap(), 0.398_942_280_401_432_7, 1e-15));
        let tri = SmoothingKernel::new(SmoothingFamily::Triangular, 2.0).unwrap();
        assert_eq!(tri.eval(0.0, 3.0).unwrap(), 0.0);
        let epa = SmoothingKernel::new(SmoothingFamily::Epanechnikov, 1.0).unwrap();
        assert!(approx(epa.eval(0.0, 0.5).unwrap(), 0.5625, 1e-15));
    }

    #[test]
    fn smoothing_kernel_rejects_bad_input() {
        assert!(SmoothingKernel::rbf(0.0).is_err());
        assert!(SmoothingKernel::rbf(f64::NAN).is_err());
        let k = SmoothingKernel::rbf(1.0).unwrap();
        assert!(k.eval(f64::INFINITY, 0.0).is_err());
        assert!(k.eval(0.0, f64::NAN).is_err());
    }

    #[test]
    fn base_functions_integrate_to_one() {
        // trapezoid on [-10, 10]
        let steps = 200_000;
        let h = 20.0 / steps as f64;
        for fam in SmoothingFamily::ALL {
            let mut total = 0.5 * (fam.base(-10.0) + fam.base(10.0));
            for i in 1..steps {
                total += fam.base(-10.0 + i as f64 * h);
            }
            let integral = total * h;
            assert!(approx(integral, 1.0, 1e-4), "{fam:?}: {integral}");
        }
    }

    #[test]
    fn base_std_matches_second_moment() {
        let steps = 200_000;
        let h = 20.0 / steps as f64;
        for fam in SmoothingFamily::ALL {
            let var: f64 = (0..=steps)
                .map(|i| {
                    let u = -10.0 + i as f64 * h;
                    u * u * fam.base(u) * h
                })
                .sum();
            assert!(approx(libm::sqrt(var), fam.base_std(), 1e-4), "{fam:?}");
        }
    }

    #[test]
    fn mmd_kernel_closed_forms() {
        let k1 = MmdKernel::new(1.0).unwrap();
        assert_eq!(k1.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        assert!(approx(k1.eval(&[0.0], &[1.0]).unwrap(), libm::exp(-0.5), 1e-15));
        let k2 = MmdKernel::new(2.0).unwrap();
        assert!(approx(k2.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap(), 0.606_530_659_712_633, 1e-14));
        assert!(k1.eval(&[0.0], &[0.0, 1.0]).is_err());
        assert!(MmdKernel::new(-1.0).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let k = MmdKernel::new(1.0).unwrap();
        let one = Matrix::from_rows(&[[0.7, 0.1]]).unwrap();
        assert_eq!(k.gram(&one).unwrap().as_slice(), &[1.0]);
        let twins = Matrix::from_rows(&[[0.7, 0.1], [0.7, 0.1]]).unwrap();
        assert_eq!(k.gram(&twins).unwrap().as_slice(), &[1.0; 4]);
        assert!(k.gram(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn gram_matches_pairwise_eval() {
        let mut rng = crate::rng::CounterRng::new(5);
        let z = Matrix::from_vec(5, 3, rng.normals(15)).unwrap();
        let k = MmdKernel::new(0.8).unwrap();
        let g = k.gram(&z).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(g[(i, j)], k.eval(z.row(i), z.row(j)).unwrap());
            }
        }
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        // smallest eigenvalue via power iteration on (c·I − K)
        let mut rng = crate::rng::CounterRng::new(9);
        for n in [5usize, 20, 50] {
            let z = Matrix::from_vec(n, 3, rng.normals(n * 3)).unwrap();
            let g = MmdKernel::new(1.0).unwrap().gram(&z).unwrap();
            let shift = n as f64;
            let mut v: Vec<f64> = rng.normals(n);
            let mut lambda = 0.0;
            for _ in 0..5000 {
                let kv = g.matvec(&v).unwrap();
                let w: Vec<f64> = v.iter().zip(&kv).map(|(a, b)| shift * a - b).collect();
                let norm = libm::sqrt(w.iter().map(|x| x * x).sum::<f64>());
                lambda = norm / libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
                v = w.iter().map(|x| x / norm).collect();
            }
            let min_eig = shift - lambda;
            assert!(min_eig >= -1e-8, "n={n}: {min_eig}");
        }
    }

    #[test]
    fn constant_sensitive_gives_zero_matrix() {
        let k = SmoothingKernel::rbf(0.3).unwrap();
        let a = centered_weight_matrix(&k, &[0.4; 6]).unwrap();
        assert!(a.entries().as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn three_point_hand_computation() {
        // Independent scalar evaluation of A_ij = K_ij / Σ_{j'≠i} K_ij' − 1/(n−1)
        // with K(s, s') = exp(−(s−s')²/2)/√(2π) for S = (0, 0.5, 1), γ = 1.
        let kern = |d: f64| libm::exp(-d * d / 2.0) / libm::sqrt(2.0 * PI);
        let s = [0.0, 0.5, 1.0];
        let mut expected = [[0.0; 3]; 3];
        for i in 0..3 {
            let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
            let total: f64 = others.iter().map(|&j| kern(s[i] - s[j])).sum();
            for &j in &others {
                expected[i][j] = kern(s[i] - s[j]) / total - 0.5;
            }
        }
        // row 0: weights ∝ (e^{-1/8}, e^{-1/2})
        let e1 = libm::exp(-0.125);
        let e2 = libm::exp(-0.5);
        assert!(approx(expected[0][1], e1 / (e1 + e2) - 0.5, 1e-15));
        let a = centered_weight_matrix(&SmoothingKernel::rbf(1.0).unwrap(), &s).unwrap();
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                assert!(approx(a.entries()[(i, j)], e, 1e-14));
            }
        }
    }

    #[test]
    fn compact_support_falls_back_to_zero_rows() {
        let k = SmoothingKernel::new(SmoothingFamily::Triangular, 0.1).unwrap();
        let a = centered_weight_matrix(&k, &[0.0, 1.0, 2.0]).unwrap();
        assert!(a.entries().as_slice().iter().all(|&v| v == 0.0));
        assert!(centered_weight_matrix(&k, &[1.0]).is_err());
    }

    #[test]
    fn eo_with_all_positives_matches_dp() {
        let k = SmoothingKernel::rbf(0.5).unwrap();
        let s = [0.1, 0.9, 0.3, 0.35, 0.7];
        let dp = centered_weight_matrix(&k, &s).unwrap();
        let eo = eo_centered_weight_matrix(&k, &s, &[1.0; 5]).unwrap();
        assert_eq!(dp.entries(), eo.entries());
        assert_eq!(eo.anchors(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn eo_masks_negative_columns() {
        let k = SmoothingKernel::rbf(0.5).unwrap();
        let a = eo_centered_weight_matrix(&k, &[0.2, 0.5, 0.9], &[1.0, 1.0, 0.0]).unwrap();
        assert!((0..3).all(|i| a.entries()[(i, 2)] == 0.0));
        assert_eq!(a.anchors(), &[0, 1]);
        let err = eo_centered_weight_matrix(&k, &[0.2, 0.5, 0.9], &[1.0, 0.0, 0.0]);
        assert_eq!(err, Err(Error::InsufficientPositives { actual: 1 }));
    }

    #[test]
    fn eo_four_point_brute_evaluation() {
        // Ã_ij = (K_ij / Σ_{j'≠i, Y_j'=1} K_ij' − 1/(n₁−1))·1{Y_j = 1}
        let s = [0.0, 0.3, 0.6, 0.9];
        let y = [1.0, 1.0, 1.0, 0.0];
        let gamma = 0.5;
        let kern = |d: f64| libm::exp(-d * d / (2.0 * gamma * gamma));
        let a = eo_centered_weight_matrix(&SmoothingKernel::rbf(gamma).unwrap(), &s, &y).unwrap();
        for i in 0..3 {
            let denom: f64 = (0..4).filter(|&j| j != i && y[j] == 1.0).map(|j| kern(s[i] - s[j])).sum();
            for j in 0..4 {
                let expected = if j == i || y[j] != 1.0 {
                    0.0
                } else {
                    kern(s[i] - s[j]) / denom - 0.5
                };
                assert!(approx(a.entries()[(i, j)], expected, 1e-14), "({i},{j})");
            }
        }
    }

    fn family_strategy() -> impl Strategy<Value = SmoothingFamily> {
        prop_oneof![
            Just(SmoothingFamily::Rbf),
            Just(SmoothingFamily::Triangular),
            Just(SmoothingFamily::Epanechnikov)
        ]
    }

    proptest! {
        #[test]
        fn smoothing_kernel_is_symmetric(fam in family_strategy(), g in 0.01f64..5.0, s in -5.0f64..5.0, t in -5.0f64..5.0) {
            let k = SmoothingKernel::new(fam, g).unwrap();
            prop_assert_eq!(k.eval(s, t).unwrap(), k.eval(t, s).unwrap());
            prop_assert!(k.eval(s, t).unwrap() >= 0.0);
            prop_assert!(k.eval(s, t).unwrap() <= fam.base(0.0));
        }

        #[test]
        fn weight_matrix_rows_sum_to_zero(
            fam in family_strategy(),
            g in 0.05f64..2.0,
            s in proptest::collection::vec(-3.0f64..3.0, 2..30),
        ) {
            let a = centered_weight_matrix(&SmoothingKernel::new(fam, g).unwrap(), &s).unwrap();
            for i in 0..s.len() {
                prop_assert_eq!(a.entries()[(i, i)], 0.0);
                let total: f64 = a.row(i).iter().sum();
                prop_assert!(total.abs() < 1e-10, "row {} sums to {}", i, total);
            }
        }

        #[test]
        fn eo_weight_matrix_rows_sum_to_zero(
            g in 0.05f64..2.0,
            pairs in proptest::collection::vec((-3.0f64..3.0, proptest::bool::ANY), 4..30),
        ) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| if p.1 { 1.0 } else { 0.0 }).collect();
            let positives = y.iter().filter(|&&v| v == 1.0).count();
            prop_assume!(positives >= 2);
            let a = eo_centered_weight_matrix(&SmoothingKernel::rbf(g).unwrap(), &s, &y).unwrap();
            for (i, &yi) in y.iter().enumerate() {
                prop_assert_eq!(a.entries()[(i, i)], 0.0);
                prop_assert!(a.row(i).iter().sum::<f64>().abs() < 1e-10);
                if yi != 1.0 {
                    for r in 0..s.len() {
                        prop_assert_eq!(a.entries()[(r, i)], 0.0);
                    }
                }
            }
        }

        #[test]
        fn weight_matrix_permutes_consistently(
            s in proptest::collection::vec(-3.0f64..3.0, 2..20),
            seed in 0u64..1000,
        ) {
            let k = SmoothingKernel::rbf(0.4).unwrap();
            let perm = crate::rng::CounterRng::new(seed).permutation(s.len());
            let permuted: Vec<f64> = perm.iter().map(|&p| s[p]).collect();
            let a = centered_weight_matrix(&k, &s).unwrap();
            let b = centered_weight_matrix(&k, &permuted).unwrap();
            for i in 0..s.len() {
                for j in 0..s.len() {
                    let expected = a.entries()[(perm[i], perm[j])];
                    prop_assert!((b.entries()[(i, j)] - expected).abs() < 1e-12);
                }
            }
        }
    }
}
