//! Replication driver for the estimator study on the Gaussian designs.
//!
//! Replication `r` draws its sample with seed `seed + r`; the ground truth is
//! integrated once per study with a seed derived from `seed`. Drivers that
//! parallelize over replications call [`Study::replicate`] directly and
//! reduce with [`Study::summarize`].

use alloc::string::String;
use alloc::vec::Vec;

use crate::eipm::{eipm_binning, eipm_nw_plugin, eipm_proposed};
use crate::error::{invalid, Result};
use crate::gaussian::{true_eipm_monte_carlo, ConditionalIpm, GaussianModel1d, GaussianModelMulti};
use crate::kernels::{MmdKernel, SmoothingKernel};
use crate::linalg::Matrix;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Design {
    OneD(GaussianModel1d),
    Multi(GaussianModelMulti),
}

impl Design {
    pub fn id(&self) -> &'static str {
        match self {
            Design::OneD(_) => "1d",
            Design::Multi(_) => "multi",
        }
    }

    /// Representation dimension.
    pub fn m(&self) -> usize {
        match self {
            Design::OneD(_) => 1,
            Design::Multi(model) => model.m(),
        }
    }

    /// Representation `Z` and sensitive attribute `S` of one sample.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
        match self {
            Design::OneD(model) => {
                let batch = model.sample(n, seed)?;
                let z = model.encode(batch.x())?;
                let (_, s, _) = batch.into_parts();
                Ok((z, s))
            }
            Design::Multi(model) => {
                let (x, s, _) = model.sample(n, seed)?.into_parts();
                Ok((x, s))
            }
        }
    }

    pub fn true_eipm(&self, samples: usize, seed: u64) -> Result<f64> {
        match self {
            Design::OneD(model) => true_eipm_monte_carlo(model, samples, seed),
            Design::Multi(model) => true_eipm_monte_carlo(model, samples, seed),
        }
    }

    pub fn true_ipm_conditional(&self, s: f64) -> f64 {
        match self {
            Design::OneD(model) => model.true_ipm_conditional(s),
            Design::Multi(model) => model.true_ipm_conditional(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    Proposed(SmoothingKernel),
    Binning(usize),
    NwPlugin { kernel: SmoothingKernel, draws: usize },
}

impl EstimatorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorSpec::Proposed(_) => "proposed",
            EstimatorSpec::Binning(_) => "binning",
            EstimatorSpec::NwPlugin { .. } => "nw",
        }
    }

    /// Bandwidth, or the bin count.
    pub fn param(&self) -> f64 {
        match self {
            EstimatorSpec::Proposed(k) | EstimatorSpec::NwPlugin { kernel: k, .. } => k.bandwidth(),
            EstimatorSpec::Binning(b) => *b as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub design: String,
    pub estimator: String,
    pub param: f64,
    pub n: usize,
    pub m: usize,
    pub reps: usize,
    pub bias: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Mean error, mean absolute error and root mean squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub bias: f64,
    pub mae: f64,
    pub rmse: f64,
}

pub fn summarize_errors(errors: &[f64]) -> ErrorSummary {
    let n = errors.len() as f64;
    ErrorSummary {
        bias: errors.iter().sum::<f64>() / n,
        mae: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
        rmse: libm::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / n),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Study {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub mmd_scale: f64,
    pub seed: u64,
    pub truth_samples: usize,
}

impl Study {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid("need at least one replication"));
        }
        if self.n < 2 {
            return Err(invalid("need at least 2 samples per replication"));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimator requested"));
        }
        if self.truth_samples == 0 {
            return Err(invalid("ground truth needs at least one Monte Carlo sample"));
        }
        MmdKernel::new(self.mmd_scale)?;
        Ok(())
    }

    pub fn truth(&self) -> Result<f64> {
        self.design
            .true_eipm(self.truth_samples, derive_seed(self.seed, u64::MAX))
    }

    /// Estimates of every requested estimator on replication `rep`.
    pub fn replicate(&self, rep: usize) -> Result<Vec<f64>> {
        let rep_seed = self.seed.wrapping_add(rep as u64);
        let (z, s) = self.design.sample(self.n, rep_seed)?;
        let mmd = MmdKernel::new(self.mmd_scale)?;
        self.estimators
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let est = match *spec {
                    EstimatorSpec::Proposed(kernel) => eipm_proposed(&z, &s, &kernel, &mmd)?,
                    EstimatorSpec::Binning(bins) => eipm_binning(&z, &s, bins, &mmd)?,
                    EstimatorSpec::NwPlugin { kernel, draws } => {
                        eipm_nw_plugin(&z, &s, &kernel, &mmd, draws, derive_seed(rep_seed, k as u64))?
                    }
                };
                Ok(est.value)
            })
            .collect()
    }

    /// One row per estimator from per-replication estimates (outer index:
    /// replication).
    pub fn summarize(&self, truth: f64, estimates: &[Vec<f64>]) -> Vec<SimulationRow> {
        self.estimators
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let errors: Vec<f64> = estimates.iter().map(|rep| rep[k] - truth).collect();
                let summary = summarize_errors(&errors);
                SimulationRow {
                    design: self.design.id().into(),
                    estimator: spec.name().into(),
                    param: spec.param(),
                    n: self.n,
                    m: self.design.m(),
                    reps: estimates.len(),
                    bias: summary.bias,
                    mae: summary.mae,
                    rmse: summary.rmse,
                }
            })
            .collect()
    }

    /// Sequential run of all replications.
    pub fn run(&self) -> Result<Vec<SimulationRow>> {
        self.validate()?;
        let truth = self.truth()?;
        let estimates = (0..self.reps)
            .map(|r| self.replicate(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.summarize(truth, &estimates))
    }
}
