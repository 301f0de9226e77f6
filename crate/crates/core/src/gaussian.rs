//! Closed-form ground truth and samplers for the Gaussian designs.
//!
//! With the unit-scale RBF kernel `κ(z,z′) = exp(−‖z−z′‖²/2)` and Gaussians
//! `P = N(μ₁, Σ₁)`, `Q = N(μ₂, Σ₂)`,
//! `E κ(U, T) = |Σ₁+Σ₂+I|^{−1/2} exp(−½ Δμᵀ(Σ₁+Σ₂+I)⁻¹Δμ)`, so the squared
//! MMD between the marginal of `Z` and its conditional given `S = s` is
//! `κ(P_Z,P_Z) + κ(P_{Z|s},P_{Z|s}) − 2κ(P_Z,P_{Z|s})`.
//!
//! Two designs are covered:
//!
//! * one-dimensional: `(X₁, X₂, S)` trivariate normal with unit variances,
//!   `Corr(S, X₁) = ρ`, `X₂` independent, and `Z = w₁X₁ + w₂X₂`;
//! * multi-dimensional: `(S, Z)` jointly normal with `Var Z_k = 1/m`,
//!   `Cov(Z_k, Z_l) = 0` and `Cov(S, Z_k) = ρ/√m`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::SampleBatch;
use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::{cholesky, cholesky_log_det, cholesky_solve, is_positive_semidefinite, Matrix};
use crate::rng::CounterRng;

/// Default number of `S` draws when integrating the conditional IPM.
pub const DEFAULT_TRUTH_SAMPLES: usize = 100_000;

/// Ground truth for a design: the IPM between `P_{Z|S=s}` and `P_Z`.
pub trait ConditionalIpm {
    fn true_ipm_conditional(&self, s: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModel1d {
    rho: f64,
    w1: f64,
    w2: f64,
}

impl GaussianModel1d {
    pub fn new(rho: f64, w1: f64, w2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidModel(alloc::format!("correlation {rho} outside [0, 1)")));
        }
        if !w1.is_finite() || !w2.is_finite() || (w1 * w1 + w2 * w2 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("encoder weights must satisfy w1² + w2² = 1".into()));
        }
        Ok(Self { rho, w1, w2 })
    }

    /// Weights `(w₁, √(1 − w₁²))`, up to rounding of the square root.
    pub fn from_w1(rho: f64, w1: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w1.abs()) {
            return Err(Error::InvalidModel(alloc::format!("encoder weight {w1} outside [-1, 1]")));
        }
        Self::new(rho, w1, libm::sqrt(1.0 - w1 * w1))
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weights(&self) -> [f64; 2] {
        [self.w1, self.w2]
    }

    /// `Cov(Z, S)`.
    fn coupling(&self) -> f64 {
        self.w1 * self.rho
    }

    /// Samples `(X₁, X₂)` and `S`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        let cov = Matrix::from_rows(&[[1.0, 0.0, self.rho], [0.0, 1.0, 0.0], [self.rho, 0.0, 1.0]])?;
        let draws = sample_gaussian(&cov, n, seed)?;
        let x = Matrix::from_fn(n, 2, |i, j| draws[(i, j)]);
        SampleBatch::new(x, draws.column(2), None)
    }

    /// `Z = X·w`.
    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        ensure_len("1-d design feature count", 2, x.cols())?;
        Ok(Matrix::from_fn(x.rows(), 1, |i, _| self.w1 * x[(i, 0)] + self.w2 * x[(i, 1)]))
    }
}

impl ConditionalIpm for GaussianModel1d {
    fn true_ipm_conditional(&self, s: f64) -> f64 {
        let a2 = self.coupling() * self.coupling();
        let marginal = 1.0 / libm::sqrt(3.0);
        let conditional = 1.0 / libm::sqrt(3.0 - 2.0 * a2);
        let cross = libm::exp(-a2 * s * s / (2.0 * (3.0 - a2))) / libm::sqrt(3.0 - a2);
        libm::sqrt((marginal + conditional - 2.0 * cross).max(0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianModelMulti {
    m: usize,
    rho: f64,
}

impl GaussianModelMulti {
    pub fn new(m: usize, rho: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidModel("representation dimension must be ≥ 1".into()));
        }
        if !(rho >= 0.0) || rho >= 1.0 / libm::sqrt(m as f64) {
            return Err(Error::InvalidModel(alloc::format!(
                "correlation {rho} must lie in [0, 1/√m) for m = {m}"
            )));
        }
        Ok(Self { m, rho })
    }

    /// The design's default correlation `1/(3√m)`.
    pub fn with_default_rho(m: usize) -> Result<Self> {
        Self::new(m, 1.0 / (3.0 * libm::sqrt(m as f64)))
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    fn joint_covariance(&self) -> Matrix {
        let m = self.m;
        let c = self.rho / libm::sqrt(m as f64);
        Matrix::from_fn(m + 1, m + 1, |i, j| match (i, j) {
            (0, 0) => 1.0,
            (0, _) | (_, 0) => c,
            _ if i == j => 1.0 / m as f64,
            _ => 0.0,
        })
    }

    /// Mean and covariance of `Z | S = s`.
    pub fn conditional_moments(&self, s: f64) -> (Vec<f64>, Matrix) {
        let m = self.m as f64;
        let mean = vec![self.rho * s / libm::sqrt(m); self.m];
        let cov = Matrix::from_fn(self.m, self.m, |i, j| {
            let diag = if i == j { 1.0 / m } else { 0.0 };
            diag - self.rho * self.rho / m
        });
        (mean, cov)
    }

    /// Samples `Z` (stored as the features) and `S`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        let draws = sample_gaussian(&self.joint_covariance(), n, seed)?;
        let x = Matrix::from_fn(n, self.m, |i, j| draws[(i, j + 1)]);
        SampleBatch::new(x, draws.column(0), None)
    }
}

impl ConditionalIpm for GaussianModelMulti {
    fn true_ipm_conditional(&self, s: f64) -> f64 {
        let m = self.m as f64;
        let r2 = self.rho * self.rho;
        let a = 1.0 + 2.0 / m;
        // shared factor A^{m−1} of all three determinants, so ρ = 0 cancels exactly
        let base = libm::pow(a, m - 1.0);
        let marginal = 1.0 / libm::sqrt(base * a);
        let conditional = 1.0 / libm::sqrt(base * (a - 2.0 * r2));
        let cross = libm::exp(-0.5 * r2 * s * s * m / (m + 2.0 - m * r2)) / libm::sqrt(base * (a - r2));
        libm::sqrt((marginal + conditional - 2.0 * cross).max(0.0))
    }
}

/// `E κ(U, T)` for independent `U ~ N(μ₁, Σ₁)`, `T ~ N(μ₂, Σ₂)` and the
/// unit-scale RBF kernel.
pub fn expected_gaussian_kernel(mu1: &[f64], sigma1: &Matrix, mu2: &[f64], sigma2: &Matrix) -> Result<f64> {
    let m = mu1.len();
    ensure_len("second mean", m, mu2.len())?;
    for sigma in [sigma1, sigma2] {
        if sigma.rows() != m || sigma.cols() != m {
            return Err(Error::DimensionMismatch {
                context: "covariance size",
                expected: m,
                actual: sigma.rows(),
            });
        }
        if !sigma.is_symmetric(1e-12 * sigma.max_abs().max(1.0)) || !is_positive_semidefinite(sigma, 1e-10) {
            return Err(invalid("covariance is not symmetric positive semi-definite"));
        }
    }
    let mut total = sigma1.add(sigma2)?;
    for i in 0..m {
        total[(i, i)] += 1.0;
    }
    let l = cholesky(&total)?;
    let delta: Vec<f64> = mu1.iter().zip(mu2).map(|(a, b)| a - b).collect();
    let solved = cholesky_solve(&l, &delta);
    let quad: f64 = delta.iter().zip(&solved).map(|(a, b)| a * b).sum();
    Ok(libm::exp(-0.5 * cholesky_log_det(&l) - 0.5 * quad))
}

/// `(1/N) Σ_i IPM(P_{Z|S_i}, P_Z)` with `S_i ~ N(0, 1)`.
pub fn true_eipm_monte_carlo(model: &impl ConditionalIpm, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(invalid("Monte Carlo needs at least one sample"));
    }
    let mut rng = CounterRng::new(seed);
    let total: f64 = (0..samples).map(|_| model.true_ipm_conditional(rng.normal())).sum();
    Ok(total / samples as f64)
}

/// `n` rows from `N(0, cov)` via its Cholesky factor.
pub fn sample_gaussian(cov: &Matrix, n: usize, seed: u64) -> Result<Matrix> {
    let l = cholesky(cov)?;
    let dim = cov.rows();
    let mut rng = CounterRng::new(seed);
    let mut out = Matrix::zeros(n, dim);
    let mut e = vec![0.0; dim];
    for i in 0..n {
        e.iter_mut().for_each(|v| *v = rng.normal());
        let row = out.row_mut(i);
        for (a, r) in row.iter_mut().enumerate() {
            *r = (0..=a).map(|b| l[(a, b)] * e[b]).sum();
        }
    }
    Ok(out)
}
