//! JSON model and report files.

use std::path::Path;

use frem_core::net::Dense;
use frem_core::trainer::{FairnessKind, FairnessReport, Regularizer, Task, TrainConfig};
use frem_core::{Matrix, Network, NetworkDims, ScalingParams, SmoothingFamily, SmoothingKernel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// One dense layer as `[rows, cols, row-major weights, bias]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerJson(pub usize, pub usize, pub Vec<f64>, pub Vec<f64>);

impl LayerJson {
    fn from_dense(layer: &Dense) -> Self {
        Self(
            layer.weights.rows(),
            layer.weights.cols(),
            layer.weights.as_slice().to_vec(),
            layer.bias.clone(),
        )
    }

    fn to_dense(&self) -> frem_core::Result<Dense> {
        Dense::new(Matrix::from_vec(self.0, self.1, self.2.clone())?, self.3.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimsJson {
    pub input: usize,
    pub hidden: usize,
    pub representation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingJson {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub s_min: f64,
    pub s_max: f64,
}

/// Training settings echoed into model and report files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigJson {
    pub task: String,
    pub fairness: String,
    pub regularizer: String,
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub kernel: String,
    pub gamma: f64,
    pub sigma: f64,
    pub hidden: usize,
    pub representation: usize,
    pub test_fraction: f64,
    pub eval_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub dims: DimsJson,
    pub activation: String,
    pub encoder: Vec<LayerJson>,
    pub head: LayerJson,
    pub scaling: ScalingJson,
    pub config: ConfigJson,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub task: String,
    pub acc: Option<f64>,
    pub ap: Option<f64>,
    pub mse: Option<f64>,
    pub mae: Option<f64>,
    pub gdp: f64,
    pub geo: Option<f64>,
    pub eipm: f64,
    pub mi_pred_s: f64,
    pub mi_z_s: f64,
    pub config: ConfigJson,
    pub seed: u64,
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::Classification => "classification",
        Task::Regression => "regression",
    }
}

pub fn parse_task(name: &str) -> Option<Task> {
    match name {
        "classification" => Some(Task::Classification),
        "regression" => Some(Task::Regression),
        _ => None,
    }
}

pub fn fairness_name(kind: FairnessKind) -> &'static str {
    match kind {
        FairnessKind::DemographicParity => "dp",
        FairnessKind::EqualOpportunity => "eo",
    }
}

pub fn regularizer_name(reg: Regularizer) -> &'static str {
    match reg {
        Regularizer::Frem => "frem",
        Regularizer::RegGdp => "reg-gdp",
        Regularizer::None => "none",
    }
}

impl ConfigJson {
    pub fn new(config: &TrainConfig, test_fraction: f64, eval_gamma: f64) -> Self {
        Self {
            task: task_name(config.task).into(),
            fairness: fairness_name(config.fairness).into(),
            regularizer: regularizer_name(config.regularizer).into(),
            lambda: config.lambda,
            lr: config.lr,
            weight_decay: config.weight_decay,
            epochs: config.epochs,
            batch: config.batch_size,
            kernel: config.smoothing.family().name().into(),
            gamma: config.smoothing.bandwidth(),
            sigma: config.mmd_scale,
            hidden: config.hidden,
            representation: config.representation,
            test_fraction,
            eval_gamma,
        }
    }

    pub fn task(&self) -> CliResult<Task> {
        parse_task(&self.task).ok_or_else(|| CliError::usage(format!("unknown task `{}` in model file", self.task)))
    }

    pub fn smoothing(&self) -> CliResult<SmoothingKernel> {
        let family: SmoothingFamily = self.kernel.parse()?;
        Ok(SmoothingKernel::new(family, self.gamma)?)
    }
}

impl ModelFile {
    pub fn new(net: &Network, scaling: &ScalingParams, config: ConfigJson, seed: u64) -> Self {
        let dims = net.dims();
        Self {
            dims: DimsJson {
                input: dims.input,
                hidden: dims.hidden,
                representation: dims.representation,
            },
            activation: "selu".into(),
            encoder: net.encoder().iter().map(LayerJson::from_dense).collect(),
            head: LayerJson::from_dense(net.head()),
            scaling: ScalingJson {
                x_min: scaling.x_min.clone(),
                x_max: scaling.x_max.clone(),
                s_min: scaling.s_min,
                s_max: scaling.s_max,
            },
            config,
            seed,
        }
    }

    pub fn network(&self) -> frem_core::Result<Network> {
        if self.activation != "selu" {
            return Err(frem_core::Error::InvalidModel(format!("unsupported activation `{}`", self.activation)));
        }
        let [first, second] = self.encoder.as_slice() else {
            return Err(frem_core::Error::InvalidModel(format!(
                "expected 2 encoder layers, found {}",
                self.encoder.len()
            )));
        };
        let net = Network::from_layers([first.to_dense()?, second.to_dense()?], self.head.to_dense()?)?;
        let d = self.dims;
        if net.dims() != NetworkDims::new(d.input, d.hidden, d.representation)? {
            return Err(frem_core::Error::InvalidModel("layer shapes disagree with `dims`".into()));
        }
        Ok(net)
    }

    pub fn scaling(&self) -> frem_core::Result<ScalingParams> {
        let params = ScalingParams {
            x_min: self.scaling.x_min.clone(),
            x_max: self.scaling.x_max.clone(),
            s_min: self.scaling.s_min,
            s_max: self.scaling.s_max,
        };
        params.validate()?;
        if params.x_min.len() != self.dims.input {
            return Err(frem_core::Error::InvalidModel("scaling width disagrees with input width".into()));
        }
        Ok(params)
    }
}

impl ReportFile {
    pub fn new(report: &FairnessReport, config: ConfigJson, seed: u64) -> Self {
        Self {
            task: task_name(report.task).into(),
            acc: report.acc,
            ap: report.ap,
            mse: report.mse,
            mae: report.mae,
            gdp: report.gdp,
            geo: report.geo,
            eipm: report.eipm,
            mi_pred_s: report.mi_pred_s,
            mi_z_s: report.mi_z_s,
            config,
            seed,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text + "\n").map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::MissingInput {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
