//! EIPM estimators with the RKHS unit ball (MMD) as discriminator class.
//!
//! * [`eipm_proposed`]: kernel-smoothed weighted empiricals,
//!   `(1/n) Σ_i √(a_iᵀ K a_i)` with `a_i` the rows of the centered weight matrix.
//! * [`eipm_binning`]: quantile-bin `S`, then the categorical estimator.
//! * [`eipm_nw_plugin`]: Nadaraya–Watson density plug-in integrated by
//!   importance sampling.
//! * [`eipm_eo`]: the proposed estimator restricted to label-1 samples.
//! * [`eipm_gradient`] / [`eipm_value_and_gradient`]: analytic `∂/∂Z` of the
//!   proposed (or EO) estimator, used as the FREM fairness gradient.
//!
//! Every anchor row of a centered weight matrix sums to zero, so
//! `a_iᵀ K a_i = a_iᵀ (K − 𝟙𝟙ᵀ) a_i`. The quadratic forms are evaluated
//! against `K − 𝟙𝟙ᵀ` (entries `expm1(−d²/2σ²)`): a constant representation
//! then gives exactly zero, and nearby points lose no precision.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::kernels::{
    centered_weight_matrix, eo_centered_weight_matrix, smoothing_weights, MmdKernel,
    SmoothingKernel, WeightMatrix,
};
use crate::linalg::{dot, squared_distance, Matrix};
use crate::rng::CounterRng;

/// Added under each per-anchor square root in the gradient so it stays
/// finite when an anchor's discrepancy is zero.
pub const SQRT_STABILIZER: f64 = 1e-12;

/// Default number of importance-sampling draws for the NW plug-in.
pub const DEFAULT_NW_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EipmMethod {
    Proposed,
    Binning,
    NwPlugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EipmParams {
    pub bandwidth: Option<f64>,
    pub bins: Option<usize>,
    pub mmd_scale: f64,
    pub draws: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EipmEstimate {
    pub value: f64,
    pub n: usize,
    pub method: EipmMethod,
    pub params: EipmParams,
}

/// Which fairness notion a weight matrix / gradient refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FairnessTarget<'a> {
    DemographicParity,
    /// Equal opportunity, with the labels of the same samples.
    EqualOpportunity(&'a [f64]),
}

fn check_inputs(z: &Matrix, s: &[f64]) -> Result<()> {
    ensure_len("sensitive attribute vs representation rows", z.rows(), s.len())?;
    if s.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            actual: s.len(),
        });
    }
    if !z.all_finite() {
        return Err(Error::NonFinite("representation".into()));
    }
    Ok(())
}

/// Entries `κ(z_j, z_k) − 1`, computed with `expm1`.
fn shifted_gram(kernel: &MmdKernel, z: &Matrix) -> Matrix {
    let n = z.rows();
    let denom = 2.0 * kernel.scale() * kernel.scale();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = libm::expm1(-squared_distance(z.row(i), z.row(j)) / denom);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `dᵀ G d` for a symmetric `G`, skipping zero weights.
fn quadratic_form(g: &Matrix, d: &[f64]) -> f64 {
    let support: Vec<usize> = (0..d.len()).filter(|&j| d[j] != 0.0).collect();
    let mut total = 0.0;
    for &j in &support {
        let row = g.row(j);
        let inner: f64 = support.iter().map(|&k| row[k] * d[k]).sum();
        total += d[j] * inner;
    }
    total
}

fn check_probability_vector(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(invalid(alloc::format!("{what} must be nonnegative and finite")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-8 {
        return Err(invalid(alloc::format!("{what} sums to {total}, expected 1")));
    }
    Ok(())
}

/// MMD between `Σ_j p_j δ(Z_j)` and `Σ_j q_j δ(Z_j)`:
/// `√max(0, pᵀKp + qᵀKq − 2pᵀKq)`.
pub fn mmd_between_weighted_empiricals(
    kernel: &MmdKernel,
    p: &[f64],
    q: &[f64],
    z: &Matrix,
) -> Result<f64> {
    ensure_len("first weight vector", z.rows(), p.len())?;
    ensure_len("second weight vector", z.rows(), q.len())?;
    check_probability_vector(p, "first weight vector")?;
    check_probability_vector(q, "second weight vector")?;
    if !z.all_finite() {
        return Err(Error::NonFinite("representation".into()));
    }
    let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
    let g = shifted_gram(kernel, z);
    Ok(libm::sqrt(quadratic_form(&g, &d).max(0.0)))
}

/// Per-anchor squared discrepancies `a_iᵀ (K − 𝟙𝟙ᵀ) a_i`.
fn anchor_discrepancies(weights: &WeightMatrix, g: &Matrix) -> Vec<f64> {
    weights
        .anchors()
        .iter()
        .map(|&i| quadratic_form(g, weights.row(i)))
        .collect()
}

fn mean_root(q: &[f64]) -> f64 {
    q.iter().map(|&v| libm::sqrt(v.max(0.0))).sum::<f64>() / q.len() as f64
}

fn weights_for(kernel: &SmoothingKernel, s: &[f64], target: FairnessTarget<'_>) -> Result<WeightMatrix> {
    match target {
        FairnessTarget::DemographicParity => centered_weight_matrix(kernel, s),
        FairnessTarget::EqualOpportunity(y) => eo_centered_weight_matrix(kernel, s, y),
    }
}

/// Kernel-smoothed EIPM estimate.
pub fn eipm_proposed(
    z: &Matrix,
    s: &[f64],
    smoothing: &SmoothingKernel,
    mmd: &MmdKernel,
) -> Result<EipmEstimate> {
    check_inputs(z, s)?;
    let weights = centered_weight_matrix(smoothing, s)?;
    let q = anchor_discrepancies(&weights, &shifted_gram(mmd, z));
    Ok(EipmEstimate {
        value: mean_root(&q),
        n: s.len(),
        method: EipmMethod::Proposed,
        params: EipmParams {
            bandwidth: Some(smoothing.bandwidth()),
            mmd_scale: mmd.scale(),
            ..Default::default()
        },
    })
}

/// Kernel-smoothed EIPM conditional on `Y = 1` (equal opportunity).
pub fn eipm_eo(
    z: &Matrix,
    s: &[f64],
    y: &[f64],
    smoothing: &SmoothingKernel,
    mmd: &MmdKernel,
) -> Result<EipmEstimate> {
    check_inputs(z, s)?;
    let weights = eo_centered_weight_matrix(smoothing, s, y)?;
    let q = anchor_discrepancies(&weights, &shifted_gram(mmd, z));
    Ok(EipmEstimate {
        value: mean_root(&q),
        n: s.len(),
        method: EipmMethod::Proposed,
        params: EipmParams {
            bandwidth: Some(smoothing.bandwidth()),
            mmd_scale: mmd.scale(),
            ..Default::default()
        },
    })
}

/// Bin labels `0..bins` from nearest-rank quantile cut points; a value equal
/// to a cut point goes to the lower bin.
pub fn quantile_bins(s: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(invalid("binning needs at least 2 bins"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(invalid("sensitive attribute contains non-finite values"));
    }
    let n = s.len();
    let mut sorted = s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cuts: Vec<f64> = (1..bins)
        .map(|b| {
            let rank = (b * n).div_ceil(bins).max(1);
            sorted[rank - 1]
        })
        .collect();
    let labels: Vec<usize> = s
        .iter()
        .map(|&v| cuts.iter().filter(|&&c| v > c).count())
        .collect();
    for b in 0..bins {
        if !labels.contains(&b) {
            return Err(Error::EmptyBin { bin: b, bins });
        }
    }
    Ok(labels)
}

/// Categorical EIPM after quantile-binning the sensitive attribute.
pub fn eipm_binning(z: &Matrix, s: &[f64], bins: usize, mmd: &MmdKernel) -> Result<EipmEstimate> {
    check_inputs(z, s)?;
    let labels = quantile_bins(s, bins)?;
    let n = s.len();
    let g = shifted_gram(mmd, z);
    let mut value = 0.0;
    for b in 0..bins {
        let count = labels.iter().filter(|&&l| l == b).count();
        let d: Vec<f64> = labels
            .iter()
            .map(|&l| if l == b { 1.0 / count as f64 } else { 0.0 } - 1.0 / n as f64)
            .collect();
        let mmd_b = libm::sqrt(quadratic_form(&g, &d).max(0.0));
        value += count as f64 / n as f64 * mmd_b;
    }
    Ok(EipmEstimate {
        value,
        n,
        method: EipmMethod::Binning,
        params: EipmParams {
            bins: Some(bins),
            mmd_scale: mmd.scale(),
            ..Default::default()
        },
    })
}

/// Nadaraya–Watson plug-in estimate.
///
/// For each anchor `i` the leave-one-out densities
/// `q̂(z) = Σ_{j≠i} φ_γ(z − Z_j)/(n−1)` and
/// `q̂(z | S_i) = Σ_{j≠i} ŵ(j; i) φ_γ(z − Z_j)` (Gaussian product kernel
/// `φ_γ`, smoothing weights `ŵ` from `smoothing`) are plugged into the
/// squared MMD, and the double integral is approximated by importance
/// sampling with `draws` points each for `z` and `z'` from `N(0, (2/m)·I)`.
/// The same proposal draws serve every anchor.
pub fn eipm_nw_plugin(
    z: &Matrix,
    s: &[f64],
    smoothing: &SmoothingKernel,
    mmd: &MmdKernel,
    draws: usize,
    seed: u64,
) -> Result<EipmEstimate> {
    check_inputs(z, s)?;
    if draws == 0 {
        return Err(invalid("NW plug-in needs at least one proposal draw"));
    }
    let n = z.rows();
    let m = z.cols();
    let params = EipmParams {
        bandwidth: Some(smoothing.bandwidth()),
        mmd_scale: mmd.scale(),
        draws: Some(draws),
        seed: Some(seed),
        ..Default::default()
    };
    // Both density estimates are the same function when all rows coincide.
    if (1..n).all(|i| z.row(i) == z.row(0)) {
        return Ok(EipmEstimate {
            value: 0.0,
            n,
            method: EipmMethod::NwPlugin,
            params,
        });
    }

    let weights = smoothing_weights(smoothing, s)?;
    let proposal_var = 2.0 / m as f64;
    let mut rng = CounterRng::new(seed);
    let draws_a = Matrix::from_vec(draws, m, rng.normals(draws * m))?;
    let draws_b = Matrix::from_vec(draws, m, rng.normals(draws * m))?;
    let sd = libm::sqrt(proposal_var);
    let scale_draws = |mut d: Matrix| {
        d.scale(sd);
        d
    };
    let draws_a = scale_draws(draws_a);
    let draws_b = scale_draws(draws_b);

    let gamma = smoothing.bandwidth();
    let log_density_norm = -0.5 * m as f64 * libm::log(2.0 * core::f64::consts::PI * gamma * gamma);
    let log_proposal_norm = -0.5 * m as f64 * libm::log(2.0 * core::f64::consts::PI * proposal_var);

    // Columns i of the returned matrices hold q̂⁽⁻ⁱ⁾(z_r)/𝔭(z_r) and q̂⁽⁻ⁱ⁾(z_r|S_i)/𝔭(z_r).
    let importance_weighted = |points: &Matrix| -> Result<(Matrix, Matrix)> {
        let mut phi = Matrix::zeros(draws, n);
        let mut inv_proposal = vec![0.0; draws];
        for r in 0..draws {
            let p = points.row(r);
            let log_p = log_proposal_norm - 0.5 * dot(p, p) / proposal_var;
            inv_proposal[r] = libm::exp(-log_p);
            if !inv_proposal[r].is_finite() {
                return Err(Error::NonFinite("NW importance weight".into()));
            }
            for j in 0..n {
                phi[(r, j)] = libm::exp(
                    log_density_norm - 0.5 * squared_distance(p, z.row(j)) / (gamma * gamma),
                );
            }
        }
        let conditional = phi.matmul(&weights.transpose())?;
        let mut marginal = Matrix::zeros(draws, n);
        for (r, &inv) in inv_proposal.iter().enumerate() {
            let row = phi.row(r);
            let total: f64 = row.iter().sum();
            for (out, &v) in marginal.row_mut(r).iter_mut().zip(row) {
                *out = (total - v) / (n - 1) as f64 * inv;
            }
        }
        let mut conditional = conditional;
        for (r, &inv) in inv_proposal.iter().enumerate() {
            conditional.row_mut(r).iter_mut().for_each(|v| *v *= inv);
        }
        Ok((marginal, conditional))
    };
    let (marg_a, cond_a) = importance_weighted(&draws_a)?;
    let (marg_b, cond_b) = importance_weighted(&draws_b)?;

    let mut cross = Matrix::zeros(draws, draws);
    for r in 0..draws {
        for t in 0..draws {
            cross[(r, t)] = mmd.eval_unchecked(draws_a.row(r), draws_b.row(t));
        }
    }
    let k_marg_b = cross.matmul(&marg_b)?;
    let k_cond_b = cross.matmul(&cond_b)?;

    let norm = 1.0 / (draws as f64 * draws as f64);
    let mut total = 0.0;
    for i in 0..n {
        let mut est = 0.0;
        for r in 0..draws {
            let (ma, ca) = (marg_a[(r, i)], cond_a[(r, i)]);
            est += ma * k_marg_b[(r, i)] + ca * k_cond_b[(r, i)] - 2.0 * ma * k_cond_b[(r, i)];
        }
        let est = est * norm;
        if !est.is_finite() {
            return Err(Error::NonFinite("NW importance-sampling estimate".into()));
        }
        total += libm::sqrt(est.max(0.0));
    }
    Ok(EipmEstimate {
        value: total / n as f64,
        n,
        method: EipmMethod::NwPlugin,
        params,
    })
}

/// Value of the proposed (or EO) estimator and its gradient with respect to
/// every entry of `z`.
///
/// With `Q_i = a_iᵀ K a_i` and `L = (1/|I|) Σ_{i∈I} √(Q_i + ε)`,
/// `∂L/∂K_jk = Σ_i a_ij a_ik / (2|I|√(Q_i+ε)) =: C_jk`, and for the RBF kernel
/// `∂K_jk/∂z_j = K_jk (z_k − z_j)/σ²`, giving
/// `∂L/∂z_j = (2/σ²) Σ_k C_jk K_jk (z_k − z_j)`.
/// The returned value is the estimator itself (no `ε`).
pub fn eipm_value_and_gradient(
    z: &Matrix,
    s: &[f64],
    smoothing: &SmoothingKernel,
    mmd: &MmdKernel,
    target: FairnessTarget<'_>,
) -> Result<(f64, Matrix)> {
    check_inputs(z, s)?;
    let weights = weights_for(smoothing, s, target)?;
    let (value, grad) = value_and_gradient_with_weights(z, &weights, mmd);
    Ok((value, grad))
}

pub(crate) fn value_and_gradient_with_weights(
    z: &Matrix,
    weights: &WeightMatrix,
    mmd: &MmdKernel,
) -> (f64, Matrix) {
    let n = z.rows();
    let m = z.cols();
    let g = shifted_gram(mmd, z);
    let q = anchor_discrepancies(weights, &g);
    let anchors = weights.anchors();
    let count = anchors.len() as f64;

    let mut c = Matrix::zeros(n, n);
    for (&i, &qi) in anchors.iter().zip(&q) {
        let coef = 1.0 / (2.0 * count * libm::sqrt(qi.max(0.0) + SQRT_STABILIZER));
        let a = weights.row(i);
        for j in 0..n {
            if a[j] == 0.0 {
                continue;
            }
            let aj = coef * a[j];
            let row = c.row_mut(j);
            for k in 0..n {
                row[k] += aj * a[k];
            }
        }
    }

    let inv_var = 1.0 / (mmd.scale() * mmd.scale());
    let mut grad = Matrix::zeros(n, m);
    for j in 0..n {
        let zj = z.row(j);
        let mut acc = vec![0.0; m];
        for k in 0..n {
            if k == j {
                continue;
            }
            // K_jk = G_jk + 1
            let w = c[(j, k)] * (g[(j, k)] + 1.0);
            if w == 0.0 {
                continue;
            }
            for ((a, &zk), &zjd) in acc.iter_mut().zip(z.row(k)).zip(zj) {
                *a += w * (zk - zjd);
            }
        }
        let out = grad.row_mut(j);
        for d in 0..m {
            out[d] = 2.0 * inv_var * acc[d];
        }
    }
    (mean_root(&q), grad)
}

/// Gradient of the proposed (DP) or EO estimator with respect to `z`.
pub fn eipm_gradient(
    z: &Matrix,
    s: &[f64],
    smoothing: &SmoothingKernel,
    mmd: &MmdKernel,
    target: FairnessTarget<'_>,
) -> Result<Matrix> {
    eipm_value_and_gradient(z, s, smoothing, mmd, target).map(|(_, g)| g)
}
