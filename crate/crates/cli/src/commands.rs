//! Command-line flags and the command implementations.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use frem_core::data::{minmax_scale, split};
use frem_core::gaussian::{GaussianModel1d, GaussianModelMulti, DEFAULT_TRUTH_SAMPLES};
use frem_core::gradcheck::{run_suite, Component, GradcheckOptions, DEFAULT_TOLERANCE};
use frem_core::simulation::{Design, EstimatorSpec, SimulationRow, Study};
use frem_core::synthetic::BiasedTask;
use frem_core::trainer::{
    evaluate, select_bandwidth, train_frem, EvalSpec, FairnessKind, Regularizer, Task, DEFAULT_BANDWIDTH_GRID,
};
use frem_core::{SampleBatch, SmoothingFamily, SmoothingKernel, TrainConfig};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::io::{read_batch, write_batch, write_simulation_rows};
use crate::model::{read_json, write_json, ConfigJson, ModelFile, ReportFile};

#[derive(Debug, Parser)]
#[command(name = "frem", version, about = "EIPM fairness estimators and fair representation training")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimator study on a Gaussian design; writes one CSV row per estimator setting.
    Simulate(SimulateArgs),
    /// Train a model on a CSV dataset and report test-split metrics.
    Train(TrainArgs),
    /// Evaluate a saved model on a CSV dataset.
    Audit(AuditArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Write the synthetic biased classification task as CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignArg {
    #[value(name = "1d")]
    OneD,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Proposed,
    Binning,
    Nw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Rbf,
    Triangular,
    Epanechnikov,
}

impl From<KernelArg> for SmoothingFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Rbf => SmoothingFamily::Rbf,
            KernelArg::Triangular => SmoothingFamily::Triangular,
            KernelArg::Epanechnikov => SmoothingFamily::Epanechnikov,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FairnessArg {
    Dp,
    Eo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegularizerArg {
    Frem,
    RegGdp,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub design: DesignArg,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    /// Representation dimension (multi design only, default 10).
    #[arg(long)]
    pub m: Option<usize>,
    /// Correlation (default 0.4 for 1d, 1/(3√m) for multi).
    #[arg(long)]
    pub rho: Option<f64>,
    /// First encoder weight of the 1d design (default √0.5).
    #[arg(long)]
    pub w1: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pub estimator: Vec<EstimatorArg>,
    /// Bandwidths for the proposed and NW estimators (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub gamma: Vec<f64>,
    /// Bin counts for the binning estimator (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub bins: Vec<usize>,
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Importance-sampling draws of the NW estimator.
    #[arg(long, default_value_t = frem_core::eipm::DEFAULT_NW_DRAWS)]
    pub draws: usize,
    /// Monte Carlo samples for the true EIPM.
    #[arg(long, default_value_t = DEFAULT_TRUTH_SAMPLES)]
    pub truth_samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output CSV (standard output if omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "classification")]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value = "dp")]
    pub fairness: FairnessArg,
    #[arg(long, value_enum, default_value = "frem")]
    pub regularizer: RegularizerArg,
    #[arg(long = "lambda", default_value_t = 0.0)]
    pub lambda: f64,
    /// Training bandwidth on the scaled sensitive attribute.
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Pick the bandwidth from {0.01, 0.05, 0.1, 0.2} on a validation split instead.
    #[arg(long)]
    pub select_gamma: bool,
    /// Validation GDP band above the best candidate used by --select-gamma.
    #[arg(long, default_value_t = 0.01)]
    pub gdp_tolerance: f64,
    #[arg(long, value_enum, default_value = "rbf")]
    pub kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 50)]
    pub representation: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Bandwidth of the GDP/GEO/EIPM evaluation kernel.
    #[arg(long, default_value_t = 0.1)]
    pub eval_gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_model: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate every row instead of re-creating the training run's test split.
    #[arg(long)]
    pub all_rows: bool,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per component.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    /// Corrupt one analytic gradient (self-test of the checker).
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 4000)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d: usize,
    /// Correlation of the first feature with the sensitive attribute.
    #[arg(long, default_value_t = 0.6)]
    pub correlation: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Train(args) => train(&args).map(|_| ()),
        Command::Audit(args) => audit(&args).map(|_| ()),
        Command::Gradcheck(args) => {
            let mut out = std::io::stdout().lock();
            gradcheck(&args, &mut out)
        }
        Command::Generate(args) => generate(&args),
    }
}

fn smoothing(kernel: KernelArg, gamma: f64) -> CliResult<SmoothingKernel> {
    SmoothingKernel::new(kernel.into(), gamma).map_err(|e| CliError::usage(format!("bandwidth {gamma}: {e}")))
}

/// Builds one study per sample size from the flags.
pub fn studies(args: &SimulateArgs) -> CliResult<Vec<Study>> {
    if args.reps == 0 {
        return Err(CliError::usage("--reps must be at least 1"));
    }
    if args.n.iter().any(|&n| n < 2) {
        return Err(CliError::usage("--n values must be at least 2"));
    }
    if args.truth_samples == 0 || args.draws == 0 {
        return Err(CliError::usage("--truth-samples and --draws must be at least 1"));
    }
    if !(args.sigma > 0.0) || !args.sigma.is_finite() {
        return Err(CliError::usage("--sigma must be positive"));
    }
    let design = match args.design {
        DesignArg::OneD => {
            if args.m.is_some() {
                return Err(CliError::usage("--m applies to the multi design only"));
            }
            let w1 = args.w1.unwrap_or(std::f64::consts::FRAC_1_SQRT_2);
            let model = GaussianModel1d::from_w1(args.rho.unwrap_or(0.4), w1)
                .map_err(|e| CliError::usage(e.to_string()))?;
            Design::OneD(model)
        }
        DesignArg::Multi => {
            if args.w1.is_some() {
                return Err(CliError::usage("--w1 applies to the 1d design only"));
            }
            let m = args.m.unwrap_or(10);
            let model = match args.rho {
                Some(rho) => GaussianModelMulti::new(m, rho),
                None => GaussianModelMulti::with_default_rho(m),
            }
            .map_err(|e| CliError::usage(e.to_string()))?;
            Design::Multi(model)
        }
    };
    let mut estimators = Vec::new();
    for est in &args.estimator {
        match est {
            EstimatorArg::Proposed | EstimatorArg::Nw => {
                if args.gamma.is_empty() {
                    return Err(CliError::usage("the proposed and nw estimators need --gamma"));
                }
                for &g in &args.gamma {
                    let kernel = smoothing(args.kernel, g)?;
                    estimators.push(match est {
                        EstimatorArg::Proposed => EstimatorSpec::Proposed(kernel),
                        _ => EstimatorSpec::NwPlugin {
                            kernel,
                            draws: args.draws,
                        },
                    });
                }
            }
            EstimatorArg::Binning => {
                if args.bins.is_empty() {
                    return Err(CliError::usage("the binning estimator needs --bins"));
                }
                if args.bins.iter().any(|&b| b < 2) {
                    return Err(CliError::usage("--bins values must be at least 2"));
                }
                estimators.extend(args.bins.iter().map(|&b| EstimatorSpec::Binning(b)));
            }
        }
    }
    Ok(args
        .n
        .iter()
        .map(|&n| Study {
            design,
            n,
            reps: args.reps,
            estimators: estimators.clone(),
            mmd_scale: args.sigma,
            seed: args.seed,
            truth_samples: args.truth_samples,
        })
        .collect())
}

/// Runs a study with replications spread over the rayon pool; results are
/// collected in replication order.
pub fn run_study_parallel(study: &Study) -> CliResult<Vec<SimulationRow>> {
    study.validate()?;
    let truth = study.truth()?;
    let estimates = (0..study.reps)
        .into_par_iter()
        .map(|r| study.replicate(r))
        .collect::<frem_core::Result<Vec<_>>>()?;
    Ok(study.summarize(truth, &estimates))
}

pub fn simulate_rows(args: &SimulateArgs) -> CliResult<Vec<SimulationRow>> {
    let mut rows = Vec::new();
    for study in studies(args)? {
        log::info!("simulating {} design, n = {}, {} replications", study.design.id(), study.n, study.reps);
        rows.extend(run_study_parallel(&study)?);
    }
    Ok(rows)
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let rows = simulate_rows(args)?;
    match &args.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            write_simulation_rows(file, &rows)
        }
        None => write_simulation_rows(std::io::stdout().lock(), &rows),
    }
    .map_err(|e| CliError::Io {
        path: args.out.clone().unwrap_or_else(|| "<stdout>".into()),
        source: e.into(),
    })
}

fn train_config(args: &TrainArgs) -> CliResult<TrainConfig> {
    let config = TrainConfig {
        lambda: args.lambda,
        lr: args.lr,
        weight_decay: args.weight_decay,
        epochs: args.epochs,
        batch_size: args.batch,
        smoothing: smoothing(args.kernel, args.gamma)?,
        mmd_scale: args.sigma,
        hidden: args.hidden,
        representation: args.representation,
        task: match args.task {
            TaskArg::Classification => Task::Classification,
            TaskArg::Regression => Task::Regression,
        },
        fairness: match args.fairness {
            FairnessArg::Dp => FairnessKind::DemographicParity,
            FairnessArg::Eo => FairnessKind::EqualOpportunity,
        },
        regularizer: match args.regularizer {
            RegularizerArg::Frem => Regularizer::Frem,
            RegularizerArg::RegGdp => Regularizer::RegGdp,
            RegularizerArg::None => Regularizer::None,
        },
        seed: args.seed,
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        return Err(CliError::usage("--test-fraction must lie strictly between 0 and 1"));
    }
    Ok(config)
}

fn eval_spec(task: Task, eval_gamma: f64, sigma: f64) -> CliResult<EvalSpec> {
    let kernel = SmoothingKernel::rbf(eval_gamma).map_err(|e| CliError::usage(format!("--eval-gamma: {e}")))?;
    Ok(EvalSpec {
        gdp_kernel: kernel,
        eipm_kernel: kernel,
        mmd_scale: sigma,
        ..EvalSpec::new(task)
    })
}

/// Train/test split of the raw data, with scaling fitted on the training part.
fn prepare(data: &SampleBatch, test_fraction: f64, seed: u64) -> CliResult<(SampleBatch, SampleBatch, frem_core::ScalingParams)> {
    let (train_raw, test_raw) = split(data, (1.0 - test_fraction, test_fraction), seed)?;
    let (train, params) = minmax_scale(&train_raw)?;
    let test = params.apply(&test_raw)?;
    Ok((train, test, params))
}

pub fn train(args: &TrainArgs) -> CliResult<ReportFile> {
    let mut config = train_config(args)?;
    let data = read_batch(&args.data)?;
    let (train, test, params) = prepare(&data, args.test_fraction, args.seed)?;
    let spec = eval_spec(config.task, args.eval_gamma, args.sigma)?;
    if args.select_gamma {
        let (fit, validation) = split(&train, (0.8, 0.2), frem_core::rng::derive_seed(args.seed, 7))?;
        let (best, candidates) =
            select_bandwidth(&fit, &validation, &config, &DEFAULT_BANDWIDTH_GRID, args.gdp_tolerance, &spec)?;
        for c in &candidates {
            log::info!("gamma {}: validation score {:.4}, gdp {:.4}", c.bandwidth, c.task_score, c.gdp);
        }
        config.smoothing = SmoothingKernel::new(config.smoothing.family(), candidates[best].bandwidth)?;
    }
    let (net, history) = train_frem(&train, &config)?;
    if let Some(last) = history.epochs.last() {
        log::info!(
            "final epoch: supervised {:.5}, fairness {:.5}, total {:.5}",
            last.supervised,
            last.fairness,
            last.total
        );
    }
    let report = evaluate(&net, &test, &spec)?;
    let config_json = ConfigJson::new(&config, args.test_fraction, args.eval_gamma);
    write_json(&args.out_model, &ModelFile::new(&net, &params, config_json.clone(), args.seed))?;
    let report = ReportFile::new(&report, config_json, args.seed);
    write_json(&args.out_report, &report)?;
    Ok(report)
}

pub fn audit(args: &AuditArgs) -> CliResult<ReportFile> {
    let model: ModelFile = read_json(&args.model)?;
    let net = model.network()?;
    let params = model.scaling()?;
    let task = model.config.task()?;
    let data = read_batch(&args.data)?;
    if data.d() != net.dims().input {
        return Err(CliError::Core(frem_core::Error::DimensionMismatch {
            context: "dataset features vs model input",
            expected: net.dims().input,
            actual: data.d(),
        }));
    }
    let eval_set = if args.all_rows {
        params.apply(&data)?
    } else {
        let (_, test_raw) = split(&data, (1.0 - model.config.test_fraction, model.config.test_fraction), model.seed)?;
        params.apply(&test_raw)?
    };
    let spec = eval_spec(task, model.config.eval_gamma, model.config.sigma)?;
    let report = evaluate(&net, &eval_set, &spec)?;
    let report = ReportFile::new(&report, model.config.clone(), model.seed);
    write_json(&args.out_report, &report)?;
    Ok(report)
}

fn parse_component(name: &str) -> CliResult<Component> {
    Component::ALL
        .into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| CliError::usage(format!("unknown gradient component `{name}`")))
}

pub fn gradcheck(args: &GradcheckArgs, out: &mut impl Write) -> CliResult<()> {
    let fault = args.inject_fault.as_deref().map(parse_component).transpose()?;
    if args.seeds == 0 {
        return Err(CliError::usage("--seeds must be at least 1"));
    }
    let results = run_suite(&GradcheckOptions {
        seed: args.seed,
        seeds: args.seeds,
        fault,
        ..Default::default()
    })?;
    let mut failing = Vec::new();
    let io_err = |source| CliError::Io {
        path: "<stdout>".into(),
        source,
    };
    for r in &results {
        let ok = r.max_error < DEFAULT_TOLERANCE;
        writeln!(
            out,
            "{:<18} max relative error {:.3e}  {}",
            r.component.name(),
            r.max_error,
            if ok { "ok" } else { "FAIL" }
        )
        .map_err(io_err)?;
        if !ok {
            failing.push(r.component.name());
        }
    }
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(failing.join(", ")))
    }
}

fn generate(args: &GenerateArgs) -> CliResult<()> {
    let task = BiasedTask {
        n: args.n,
        d: args.d,
        correlation: args.correlation,
    };
    let batch = task.generate(args.seed).map_err(|e| CliError::usage(e.to_string()))?;
    write_batch(Path::new(&args.out), &batch)
}
