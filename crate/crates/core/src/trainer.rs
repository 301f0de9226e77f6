//! FREM training: mini-batch supervised loss plus a λ-weighted fairness
//! penalty, either the batch-local EIPM of the representation or the
//! smoothed GDP of the predictions, and evaluation reports.

use alloc::format;
use alloc::vec::Vec;

use crate::data::SampleBatch;
use crate::eipm::{eipm_eo, eipm_proposed, value_and_gradient_with_weights};
use crate::error::{ensure_len, invalid, Error, Result};
use crate::kernels::{centered_weight_matrix, eo_centered_weight_matrix, MmdKernel, SmoothingKernel};
use crate::linalg::Matrix;
use crate::metrics::{
    accuracy, average_precision, estimate_gdp, estimate_geo, estimate_mi_knn, mae, mse, DEFAULT_MI_NEIGHBORS,
};
use crate::net::{AdamW, Network, NetworkDims};
use crate::rng::{derive_seed, CounterRng};

/// Floor inside the smoothed absolute value `√(x² + δ)` of the GDP penalty.
pub const REG_GDP_SMOOTHING: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FairnessKind {
    DemographicParity,
    EqualOpportunity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularizer {
    Frem,
    RegGdp,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub smoothing: SmoothingKernel,
    pub mmd_scale: f64,
    pub hidden: usize,
    pub representation: usize,
    pub task: Task,
    pub fairness: FairnessKind,
    pub regularizer: Regularizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            lr: 1e-3,
            weight_decay: 0.01,
            epochs: 200,
            batch_size: 200,
            smoothing: SmoothingKernel::rbf(0.1).expect("positive bandwidth"),
            mmd_scale: 1.0,
            hidden: 50,
            representation: 50,
            task: Task::Classification,
            fairness: FairnessKind::DemographicParity,
            regularizer: Regularizer::Frem,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("λ must be a finite nonnegative number"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(invalid("learning rate must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight decay must be nonnegative"));
        }
        if self.epochs == 0 {
            return Err(invalid("need at least one epoch"));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch size must be ≥ 2"));
        }
        MmdKernel::new(self.mmd_scale)?;
        NetworkDims::new(1, self.hidden, self.representation)?;
        Ok(())
    }
}

/// Epoch means of the per-batch losses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub supervised: f64,
    pub fairness: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// EO batches with fewer than two positives, whose fairness term was 0.
    pub skipped_eo_batches: usize,
}

/// Mean binary cross-entropy on logits, or mean squared error, and its
/// gradient with respect to the predictions.
pub fn supervised_loss(pred: &[f64], y: &[f64], task: Task) -> Result<(f64, Vec<f64>)> {
    ensure_len("labels vs predictions", pred.len(), y.len())?;
    if pred.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, actual: 0 });
    }
    let n = pred.len() as f64;
    match task {
        Task::Classification => {
            if y.iter().any(|&t| t != 0.0 && t != 1.0) {
                return Err(invalid("classification labels must be 0 or 1"));
            }
            let mut loss = 0.0;
            let grad = pred
                .iter()
                .zip(y)
                .map(|(&x, &t)| {
                    loss += x.max(0.0) - x * t + libm::log1p(libm::exp(-x.abs()));
                    (sigmoid(x) - t) / n
                })
                .collect();
            Ok((loss / n, grad))
        }
        Task::Regression => {
            let loss = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
            let grad = pred.iter().zip(y).map(|(p, t)| 2.0 * (p - t) / n).collect();
            Ok((loss, grad))
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Differentiable GDP surrogate: `(1/n) Σ_i √(d_i² + δ)` with
/// `d = A·pred` (`A` the centered weight matrix), and its gradient.
pub fn reg_gdp_penalty(pred: &[f64], s: &[f64], kernel: &SmoothingKernel) -> Result<(f64, Vec<f64>)> {
    ensure_len("sensitive attribute vs predictions", pred.len(), s.len())?;
    let weights = centered_weight_matrix(kernel, s)?;
    let a = weights.entries();
    let n = pred.len();
    // rows of A sum to zero; centering makes a constant vector exact
    let reference = pred.first().copied().unwrap_or(0.0);
    let centered: Vec<f64> = pred.iter().map(|p| p - reference).collect();
    let d = a.matvec(&centered)?;
    let mut value = 0.0;
    let t: Vec<f64> = d
        .iter()
        .map(|&di| {
            let root = libm::sqrt(di * di + REG_GDP_SMOOTHING);
            value += root;
            di / root / n as f64
        })
        .collect();
    let grad = a.transpose().matvec(&t)?;
    Ok((value / n as f64, grad))
}

fn labels(data: &SampleBatch) -> Result<&[f64]> {
    data.y().ok_or_else(|| invalid("training data needs labels"))
}

struct BatchTerms {
    fairness: f64,
    d_output: Vec<f64>,
    d_z: Option<Matrix>,
    skipped: bool,
}

fn fairness_terms(
    config: &TrainConfig,
    mmd: &MmdKernel,
    z: &Matrix,
    output: &[f64],
    s: &[f64],
    y: &[f64],
) -> Result<BatchTerms> {
    let n = output.len();
    let eo = config.fairness == FairnessKind::EqualOpportunity;
    let positives = y.iter().filter(|&&t| t == 1.0).count();
    if eo && positives < 2 {
        return Ok(BatchTerms {
            fairness: 0.0,
            d_output: alloc::vec![0.0; n],
            d_z: None,
            skipped: true,
        });
    }
    match config.regularizer {
        Regularizer::None => Ok(BatchTerms {
            fairness: 0.0,
            d_output: alloc::vec![0.0; n],
            d_z: None,
            skipped: false,
        }),
        Regularizer::Frem => {
            let weights = if eo {
                eo_centered_weight_matrix(&config.smoothing, s, y)?
            } else {
                centered_weight_matrix(&config.smoothing, s)?
            };
            let (value, grad) = value_and_gradient_with_weights(z, &weights, mmd);
            Ok(BatchTerms {
                fairness: value,
                d_output: alloc::vec![0.0; n],
                d_z: Some(grad),
                skipped: false,
            })
        }
        Regularizer::RegGdp => {
            let pred: Vec<f64> = match config.task {
                Task::Classification => output.iter().map(|&x| sigmoid(x)).collect(),
                Task::Regression => output.to_vec(),
            };
            let idx: Vec<usize> = if eo {
                (0..n).filter(|&i| y[i] == 1.0).collect()
            } else {
                (0..n).collect()
            };
            let sub_pred: Vec<f64> = idx.iter().map(|&i| pred[i]).collect();
            let sub_s: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let (value, sub_grad) = reg_gdp_penalty(&sub_pred, &sub_s, &config.smoothing)?;
            let mut d_output = alloc::vec![0.0; n];
            for (&i, g) in idx.iter().zip(sub_grad) {
                d_output[i] = match config.task {
                    Task::Classification => g * pred[i] * (1.0 - pred[i]),
                    Task::Regression => g,
                };
            }
            Ok(BatchTerms {
                fairness: value,
                d_output,
                d_z: None,
                skipped: false,
            })
        }
    }
}

/// Trains a fresh network on `data` (features and `S` already scaled).
pub fn train_frem(data: &SampleBatch, config: &TrainConfig) -> Result<(Network, TrainHistory)> {
    config.validate()?;
    let y = labels(data)?;
    if config.task == Task::Classification && !is_binary(y) {
        return Err(invalid("classification labels must be 0 or 1"));
    }
    let n = data.n();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, actual: n });
    }
    let dims = NetworkDims::new(data.d(), config.hidden, config.representation)?;
    let mmd = MmdKernel::new(config.mmd_scale)?;
    let mut net = Network::init(dims, derive_seed(config.seed, 1));
    let mut optimizer = AdamW::new(dims.param_count(), config.lr, config.weight_decay);
    let mut shuffler = CounterRng::new(derive_seed(config.seed, 2));
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let order = shuffler.permutation(n);
        let (mut sup_sum, mut fair_sum, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = data.select(chunk);
            let by = batch.y().expect("labels checked");
            let fwd = net.forward(batch.x())?;
            let (sup, mut d_output) = supervised_loss(&fwd.output, by, config.task)?;
            let terms = fairness_terms(config, &mmd, &fwd.z, &fwd.output, batch.s(), by)?;
            if !sup.is_finite() || !terms.fairness.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {}", epoch + 1)));
            }
            history.skipped_eo_batches += terms.skipped as usize;
            let mut d_z = None;
            if config.lambda != 0.0 {
                d_output
                    .iter_mut()
                    .zip(&terms.d_output)
                    .for_each(|(d, f)| *d += config.lambda * f);
                d_z = terms.d_z.map(|mut g| {
                    g.scale(config.lambda);
                    g
                });
            }
            let grads = net.backward(&fwd.cache, &d_output, d_z.as_ref())?;
            optimizer.step_network(&mut net, &grads);
            sup_sum += sup;
            fair_sum += terms.fairness;
            batches += 1;
        }
        if batches == 0 {
            return Err(invalid("no mini-batch of at least 2 samples"));
        }
        let supervised = sup_sum / batches as f64;
        let fairness = fair_sum / batches as f64;
        history.epochs.push(EpochRecord {
            supervised,
            fairness,
            total: supervised + config.lambda * fairness,
        });
    }
    if history.skipped_eo_batches > 0 {
        log::warn!(
            "{} mini-batches had fewer than 2 positive labels; their fairness term was 0",
            history.skipped_eo_batches
        );
    }
    Ok((net, history))
}

/// Settings for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub task: Task,
    /// Kernel for GDP and GEO.
    pub gdp_kernel: SmoothingKernel,
    /// Smoothing kernel for the representation EIPM.
    pub eipm_kernel: SmoothingKernel,
    pub mmd_scale: f64,
    pub mi_neighbors: usize,
    /// EIPM is cubic in the sample count; larger sets are evaluated on a
    /// deterministic subsample of this size.
    pub eipm_max_samples: Option<usize>,
}

impl EvalSpec {
    pub fn new(task: Task) -> Self {
        let kernel = SmoothingKernel::rbf(0.1).expect("positive bandwidth");
        Self {
            task,
            gdp_kernel: kernel,
            eipm_kernel: kernel,
            mmd_scale: 1.0,
            mi_neighbors: DEFAULT_MI_NEIGHBORS,
            eipm_max_samples: Some(2000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub task: Task,
    pub acc: Option<f64>,
    pub ap: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub gdp: f64,
    pub geo: Option<f64>,
    pub eipm: f64,
    pub mi_pred_s: f64,
    pub mi_z_s: f64,
}

/// Predictions on the probability scale for classification.
pub fn predict(model: &Network, x: &Matrix, task: Task) -> Result<(Matrix, Vec<f64>)> {
    let out = model.forward(x)?;
    let pred = match task {
        Task::Classification => out.output.iter().map(|&v| sigmoid(v)).collect(),
        Task::Regression => out.output,
    };
    Ok((out.z, pred))
}

fn is_binary(y: &[f64]) -> bool {
    y.iter().all(|&t| t == 0.0 || t == 1.0)
}

pub fn evaluate(model: &Network, data: &SampleBatch, spec: &EvalSpec) -> Result<FairnessReport> {
    let (z, pred) = predict(model, data.x(), spec.task)?;
    let s = data.s();
    let y = data.y();
    let mut report = FairnessReport {
        task: spec.task,
        acc: None,
        ap: None,
        mse: None,
        mae: None,
        gdp: estimate_gdp(&pred, s, &spec.gdp_kernel)?,
        geo: None,
        eipm: 0.0,
        mi_pred_s: 0.0,
        mi_z_s: 0.0,
    };
    if let Some(y) = y {
        match spec.task {
            Task::Classification => {
                report.acc = Some(accuracy(&pred, y)?);
                report.ap = average_precision(&pred, y)?;
            }
            Task::Regression => {
                report.mse = Some(mse(&pred, y)?);
                report.mae = Some(mae(&pred, y)?);
            }
        }
        if is_binary(y) && y.iter().filter(|&&t| t == 1.0).count() >= 2 {
            report.geo = Some(estimate_geo(&pred, s, y, &spec.gdp_kernel)?);
        }
    }
    let mmd = MmdKernel::new(spec.mmd_scale)?;
    report.eipm = match spec.eipm_max_samples {
        Some(cap) if cap >= 2 && data.n() > cap => {
            let mut idx = CounterRng::new(derive_seed(data.n() as u64, 3)).permutation(data.n());
            idx.truncate(cap);
            idx.sort_unstable();
            let zs = z.select_rows(&idx);
            let ss: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            eipm_proposed(&zs, &ss, &spec.eipm_kernel, &mmd)?.value
        }
        _ => eipm_proposed(&z, s, &spec.eipm_kernel, &mmd)?.value,
    };
    let s_col = Matrix::column_vector(s);
    report.mi_pred_s = estimate_mi_knn(&pred, &s_col, spec.mi_neighbors)?;
    report.mi_z_s = estimate_mi_knn(s, &z, spec.mi_neighbors)?;
    Ok(report)
}

/// EIPM of the representation restricted to label-1 samples.
pub fn representation_eipm_eo(model: &Network, data: &SampleBatch, spec: &EvalSpec) -> Result<f64> {
    let (z, _) = predict(model, data.x(), spec.task)?;
    let y = data.y().ok_or_else(|| invalid("EO evaluation needs labels"))?;
    Ok(eipm_eo(&z, data.s(), y, &spec.eipm_kernel, &MmdKernel::new(spec.mmd_scale)?)?.value)
}

/// Outcome of one candidate bandwidth in [`select_bandwidth`].
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthCandidate {
    pub bandwidth: f64,
    pub task_score: f64,
    pub gdp: f64,
}

pub const DEFAULT_BANDWIDTH_GRID: [f64; 4] = [0.01, 0.05, 0.1, 0.2];

/// Trains one model per bandwidth on `train`, scores each on `validation`,
/// and returns the index of the chosen candidate: the best task score
/// (accuracy, or negative MSE) among candidates whose validation GDP is at
/// most `min GDP + tolerance`.
pub fn select_bandwidth(
    train: &SampleBatch,
    validation: &SampleBatch,
    config: &TrainConfig,
    grid: &[f64],
    tolerance: f64,
    spec: &EvalSpec,
) -> Result<(usize, Vec<BandwidthCandidate>)> {
    if grid.is_empty() {
        return Err(invalid("empty bandwidth grid"));
    }
    let mut candidates = Vec::with_capacity(grid.len());
    for &gamma in grid {
        let cfg = TrainConfig {
            smoothing: SmoothingKernel::new(config.smoothing.family(), gamma)?,
            ..*config
        };
        let (net, _) = train_frem(train, &cfg)?;
        let report = evaluate(&net, validation, spec)?;
        let task_score = match spec.task {
            Task::Classification => report.acc.unwrap_or(0.0),
            Task::Regression => -report.mse.unwrap_or(f64::INFINITY),
        };
        candidates.push(BandwidthCandidate {
            bandwidth: gamma,
            task_score,
            gdp: report.gdp,
        });
    }
    let floor = candidates.iter().map(|c| c.gdp).fold(f64::INFINITY, f64::min);
    let best = (0..candidates.len())
        .filter(|&i| candidates[i].gdp <= floor + tolerance)
        .max_by(|&a, &b| candidates[a].task_score.total_cmp(&candidates[b].task_score))
        .expect("the minimum-GDP candidate is always eligible");
    Ok((best, candidates))
}
