//! Estimators for the expected integral probability metric (EIPM) between the
//! conditional distribution of a representation given a continuous sensitive
//! attribute and its marginal, and the FREM training procedure that uses the
//! MMD-based estimator as a fairness penalty.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel sweeps live in the `frem` companion crate.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`kernels`] | smoothing kernel on `S`, RBF kernel on `Z`, centered weight matrices |
//! | [`eipm`] | proposed, binning and Nadaraya–Watson estimators, EO variant, analytic gradient |
//! | [`gaussian`] | closed-form ground truth and samplers for the Gaussian designs |
//! | [`metrics`] | GDP / GEO, kNN mutual information, task metrics |
//! | [`net`] | two-layer selu encoder with a linear head, backprop, AdamW |
//! | [`trainer`] | FREM / Reg-GDP training loop and evaluation |
//! | [`data`] | sample batches, min-max scaling, splitting |
//! | [`simulation`] | replication driver for the estimator study |
//! | [`gradcheck`] | finite-difference checks of every analytic gradient |
//!
//! ```
//! use frem_core::eipm::eipm_proposed;
//! use frem_core::gaussian::GaussianModel1d;
//! use frem_core::{MmdKernel, SmoothingKernel};
//!
//! let model = GaussianModel1d::from_w1(0.4, 0.5f64.sqrt())?;
//! let batch = model.sample(200, 7)?;
//! let z = model.encode(batch.x())?;
//! let estimate = eipm_proposed(&z, batch.s(), &SmoothingKernel::rbf(0.5)?, &MmdKernel::new(1.0)?)?;
//! assert!(estimate.value > 0.0);
//! # Ok::<(), frem_core::Error>(())
//! ```

#![no_std]
#![deny(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod eipm;
pub mod error;
pub mod gaussian;
pub mod gradcheck;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod simulation;
pub mod synthetic;
pub mod trainer;

pub use crate::data::{SampleBatch, ScalingParams};
pub use crate::eipm::{EipmEstimate, EipmMethod};
pub use crate::error::{Error, Result};
pub use crate::kernels::{MmdKernel, SmoothingFamily, SmoothingKernel, WeightKind, WeightMatrix};
pub use crate::linalg::Matrix;
pub use crate::net::{Network, NetworkDims};
pub use crate::rng::CounterRng;
pub use crate::trainer::{FairnessReport, TrainConfig, TrainHistory};
