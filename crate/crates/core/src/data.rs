//! Sample batches, min-max scaling and deterministic splits.

use alloc::vec::Vec;

use crate::error::{ensure_len, invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::CounterRng;

/// Features `X` (n×d), sensitive attribute `S` and optional labels `Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    x: Matrix,
    s: Vec<f64>,
    y: Option<Vec<f64>>,
}

impl SampleBatch {
    pub fn new(x: Matrix, s: Vec<f64>, y: Option<Vec<f64>>) -> Result<Self> {
        ensure_len("sensitive attribute length", x.rows(), s.len())?;
        if let Some(y) = &y {
            ensure_len("label length", x.rows(), y.len())?;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("labels".into()));
            }
        }
        if !x.all_finite() {
            return Err(Error::NonFinite("features".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sensitive attribute".into()));
        }
        Ok(Self { x, s, y })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y(&self) -> Option<&[f64]> {
        self.y.as_deref()
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    /// Rows picked by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            s: indices.iter().map(|&i| self.s[i]).collect(),
            y: self.y.as_ref().map(|y| indices.iter().map(|&i| y[i]).collect()),
        }
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>, Option<Vec<f64>>) {
        (self.x, self.s, self.y)
    }
}

/// Per-column minima and maxima of `X` and of `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingParams {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

fn scale_value(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        0.0
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

impl ScalingParams {
    pub fn fit(batch: &SampleBatch) -> Result<Self> {
        if batch.n() == 0 {
            return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
        }
        let d = batch.d();
        let mut x_min = Vec::with_capacity(d);
        let mut x_max = Vec::with_capacity(d);
        for j in 0..d {
            let (lo, hi) = min_max((0..batch.n()).map(|i| batch.x[(i, j)]));
            if hi == lo {
                log::warn!("feature column x{j} is constant; scaled to all zeros");
            }
            x_min.push(lo);
            x_max.push(hi);
        }
        let (s_min, s_max) = min_max(batch.s.iter().copied());
        if s_max == s_min {
            log::warn!("sensitive attribute is constant; scaled to all zeros");
        }
        Ok(Self {
            x_min,
            x_max,
            s_min,
            s_max,
        })
    }

    /// Maps `batch` with these parameters; labels pass through unchanged.
    /// Constant training columns map to 0.
    pub fn apply(&self, batch: &SampleBatch) -> Result<SampleBatch> {
        ensure_len("scaling parameter count", self.x_min.len(), batch.d())?;
        let x = Matrix::from_fn(batch.n(), batch.d(), |i, j| {
            scale_value(batch.x[(i, j)], self.x_min[j], self.x_max[j])
        });
        let s = batch
            .s
            .iter()
            .map(|&v| self.scale_sensitive(v))
            .collect();
        SampleBatch::new(x, s, batch.y.clone())
    }

    pub fn scale_sensitive(&self, v: f64) -> f64 {
        scale_value(v, self.s_min, self.s_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_min.len() != self.x_max.len() {
            return Err(invalid("scaling minima and maxima differ in length"));
        }
        let cols = self.x_min.iter().zip(&self.x_max);
        if cols.chain(core::iter::once((&self.s_min, &self.s_max))).any(|(lo, hi)| !(hi >= lo)) {
            return Err(invalid("scaling maximum below minimum"));
        }
        Ok(())
    }
}

/// Min-max scales every feature column and `S` to `[0, 1]`.
pub fn minmax_scale(batch: &SampleBatch) -> Result<(SampleBatch, ScalingParams)> {
    let params = ScalingParams::fit(batch)?;
    let scaled = params.apply(batch)?;
    Ok((scaled, params))
}

/// Shuffled partition into `(train, test)` with `round(n · train_fraction)`
/// training rows.
pub fn split(batch: &SampleBatch, fractions: (f64, f64), seed: u64) -> Result<(SampleBatch, SampleBatch)> {
    let (train, test) = fractions;
    if !(train > 0.0 && test > 0.0) || ((train + test) - 1.0).abs() > 1e-9 {
        return Err(invalid("split fractions must be positive and sum to 1"));
    }
    let n = batch.n();
    let n_train = libm::round(n as f64 * train) as usize;
    if n_train == 0 || n_train >= n {
        return Err(invalid(alloc::format!(
            "split of {n} rows with fraction {train} leaves an empty partition"
        )));
    }
    let perm = CounterRng::new(seed).permutation(n);
    Ok((batch.select(&perm[..n_train]), batch.select(&perm[n_train..])))
}
