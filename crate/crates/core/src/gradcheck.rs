//! Central finite differences and the gradient self-check suite.

use alloc::vec::Vec;

use crate::eipm::{eipm_eo, eipm_proposed, eipm_value_and_gradient, FairnessTarget};
use crate::error::Result;
use crate::kernels::{MmdKernel, SmoothingKernel};
use crate::linalg::Matrix;
use crate::net::{Network, NetworkDims};
use crate::rng::{derive_seed, CounterRng};
use crate::trainer::{reg_gdp_penalty, supervised_loss, Task};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every coordinate.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, 1e−6)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Component {
    EipmDp,
    EipmEo,
    RegGdp,
    Network,
}

impl Component {
    pub const ALL: [Component; 4] = [Self::EipmDp, Self::EipmEo, Self::RegGdp, Self::Network];

    pub fn name(self) -> &'static str {
        match self {
            Self::EipmDp => "eipm-gradient-dp",
            Self::EipmEo => "eipm-gradient-eo",
            Self::RegGdp => "reg-gdp-penalty",
            Self::Network => "network-backward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckResult {
    pub component: Component,
    pub max_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub seeds: usize,
    pub step: f64,
    /// Perturbs one analytic gradient entry of this component, so that the
    /// suite can be shown to catch a wrong gradient.
    pub fault: Option<Component>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            seeds: 10,
            step: DEFAULT_STEP,
            fault: None,
        }
    }
}

fn inject(grad: &mut [f64], apply: bool) {
    if apply {
        if let Some(g) = grad.first_mut() {
            *g += 0.01 * (1.0 + g.abs());
        }
    }
}

fn check_eipm(rng: &mut CounterRng, eo: bool, opts: &GradcheckOptions, fault: bool) -> Result<f64> {
    let (n, m) = (8, 3);
    let z = Matrix::from_vec(n, m, rng.normals(n * m))?;
    let s: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let mut y: Vec<f64> = (0..n).map(|_| (rng.uniform() < 0.6) as u8 as f64).collect();
    y[0] = 1.0;
    y[1] = 1.0;
    let smoothing = SmoothingKernel::rbf(0.3)?;
    let mmd = MmdKernel::new(1.0)?;
    let target = if eo {
        FairnessTarget::EqualOpportunity(&y)
    } else {
        FairnessTarget::DemographicParity
    };
    let (_, grad) = eipm_value_and_gradient(&z, &s, &smoothing, &mmd, target)?;
    let mut analytic = grad.into_vec();
    inject(&mut analytic, fault);
    let numeric = central_difference(
        |x| {
            let zz = Matrix::from_vec(n, m, x.to_vec()).expect("same shape");
            let est = if eo {
                eipm_eo(&zz, &s, &y, &smoothing, &mmd)
            } else {
                eipm_proposed(&zz, &s, &smoothing, &mmd)
            };
            est.expect("valid inputs").value
        },
        z.as_slice(),
        opts.step,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

fn check_reg_gdp(rng: &mut CounterRng, opts: &GradcheckOptions, fault: bool) -> Result<f64> {
    let n = 12;
    let s: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let pred: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let kernel = SmoothingKernel::rbf(0.2)?;
    let (_, mut analytic) = reg_gdp_penalty(&pred, &s, &kernel)?;
    inject(&mut analytic, fault);
    let numeric = central_difference(
        |x| reg_gdp_penalty(x, &s, &kernel).expect("valid inputs").0,
        &pred,
        opts.step,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

/// Cross-entropy plus an EIPM penalty on the representation, through the
/// whole network.
fn check_network(rng: &mut CounterRng, opts: &GradcheckOptions, fault: bool) -> Result<f64> {
    let n = 6;
    let dims = NetworkDims::new(2, 4, 3)?;
    let net = Network::init(dims, rng.next_u64());
    let x = Matrix::from_vec(n, 2, rng.normals(2 * n))?;
    let s: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    let smoothing = SmoothingKernel::rbf(0.3)?;
    let mmd = MmdKernel::new(1.0)?;
    let lambda = 0.7;

    let loss = |candidate: &Network| -> f64 {
        let out = candidate.forward(&x).expect("finite forward");
        let sup = supervised_loss(&out.output, &y, Task::Classification).expect("valid labels").0;
        let fair = eipm_proposed(&out.z, &s, &smoothing, &mmd).expect("valid inputs").value;
        sup + lambda * fair
    };

    let out = net.forward(&x)?;
    let (_, d_out) = supervised_loss(&out.output, &y, Task::Classification)?;
    let (_, mut d_z) = eipm_value_and_gradient(&out.z, &s, &smoothing, &mmd, FairnessTarget::DemographicParity)?;
    d_z.scale(lambda);
    let mut analytic = net.backward(&out.cache, &d_out, Some(&d_z))?.to_flat();
    inject(&mut analytic, fault);
    let mut probe = net.clone();
    let numeric = central_difference(
        |flat| {
            probe.set_flat(flat).expect("same length");
            loss(&probe)
        },
        &net.to_flat(),
        opts.step,
    );
    Ok(max_relative_error(&analytic, &numeric))
}

/// Worst relative error per component over `opts.seeds` random instances.
pub fn run_suite(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    Component::ALL
        .iter()
        .enumerate()
        .map(|(k, &component)| {
            let fault = opts.fault == Some(component);
            let mut worst: f64 = 0.0;
            for r in 0..opts.seeds.max(1) {
                let mut rng = CounterRng::new(derive_seed(opts.seed.wrapping_add(r as u64), k as u64));
                let err = match component {
                    Component::EipmDp => check_eipm(&mut rng, false, opts, fault)?,
                    Component::EipmEo => check_eipm(&mut rng, true, opts, fault)?,
                    Component::RegGdp => check_reg_gdp(&mut rng, opts, fault)?,
                    Component::Network => check_network(&mut rng, opts, fault)?,
                };
                worst = worst.max(err);
            }
            Ok(CheckResult {
                component,
                max_error: worst,
            })
        })
        .collect()
}
