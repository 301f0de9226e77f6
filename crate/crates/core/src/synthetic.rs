//! A synthetic binary classification task whose label leaks the sensitive
//! attribute through one feature.
//!
//! `S ~ N(0, 1)`; `X₁ = c·S + √(1 − c²)·ε` so that `Corr(X₁, S) = c`; the
//! remaining features are independent standard normals. The label is
//! Bernoulli with logit `1.5·X₁ + 3·X₂ + 0.5·X₃` (terms for missing features
//! dropped).

use alloc::vec::Vec;

use crate::data::SampleBatch;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::CounterRng;
use crate::trainer::sigmoid;

const LOGIT_WEIGHTS: [f64; 3] = [1.5, 3.0, 0.5];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasedTask {
    pub n: usize,
    pub d: usize,
    /// Correlation between `S` and the first feature.
    pub correlation: f64,
}

impl Default for BiasedTask {
    fn default() -> Self {
        Self {
            n: 4000,
            d: 5,
            correlation: 0.6,
        }
    }
}

impl BiasedTask {
    /// Raw (unscaled) samples.
    pub fn generate(&self, seed: u64) -> Result<SampleBatch> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("biased task needs n ≥ 1 and d ≥ 1"));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(invalid("correlation must lie in [-1, 1]"));
        }
        let mut rng = CounterRng::new(seed);
        let noise = libm::sqrt(1.0 - self.correlation * self.correlation);
        let mut x = Matrix::zeros(self.n, self.d);
        let mut s = Vec::with_capacity(self.n);
        let mut y = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let si = rng.normal();
            let row = x.row_mut(i);
            row[0] = self.correlation * si + noise * rng.normal();
            for v in row.iter_mut().skip(1) {
                *v = rng.normal();
            }
            let logit: f64 = row.iter().zip(LOGIT_WEIGHTS).map(|(a, w)| a * w).sum();
            y.push((rng.uniform() < sigmoid(logit)) as u8 as f64);
            s.push(si);
        }
        SampleBatch::new(x, s, Some(y))
    }
}
