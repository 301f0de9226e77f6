//! Two-layer selu encoder with a scalar linear head, backpropagation and
//! AdamW.
//!
//! Weights are stored `fan_in × fan_out`, so a layer computes `H·W + b` on a
//! row-per-sample input `H`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{ensure_len, Error, Result};
use crate::linalg::Matrix;
use crate::rng::CounterRng;

pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;

#[inline]
pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * libm::expm1(x)
    }
}

#[inline]
pub fn selu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * libm::exp(x)
    }
}

/// Input width, hidden width and representation width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub input: usize,
    pub hidden: usize,
    pub representation: usize,
}

impl NetworkDims {
    pub fn new(input: usize, hidden: usize, representation: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || representation == 0 {
            return Err(Error::InvalidModel("network widths must be ≥ 1".into()));
        }
        Ok(Self {
            input,
            hidden,
            representation,
        })
    }

    pub fn param_count(&self) -> usize {
        (self.input + 1) * self.hidden + (self.hidden + 1) * self.representation + self.representation + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        ensure_len("layer bias", weights.cols(), bias.len())?;
        Ok(Self { weights, bias })
    }

    fn lecun(fan_in: usize, fan_out: usize, rng: &mut CounterRng) -> Self {
        let sd = libm::sqrt(1.0 / fan_in as f64);
        let w = rng.normals(fan_in * fan_out).into_iter().map(|v| v * sd).collect();
        Self {
            weights: Matrix::from_vec(fan_in, fan_out, w).expect("sized above"),
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn apply(&self, input: &Matrix) -> Result<Matrix> {
        let mut out = input.matmul(&self.weights)?;
        for i in 0..out.rows() {
            out.row_mut(i).iter_mut().zip(&self.bias).for_each(|(o, b)| *o += b);
        }
        Ok(out)
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.as_slice().iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.as_mut_slice().iter_mut().chain(self.bias.iter_mut())
    }

    fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}

/// Parameters (or gradients) of the encoder layers and the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    encoder: [Dense; 2],
    head: Dense,
}

/// Intermediate values kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Matrix,
    pre: [Matrix; 2],
    hidden: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Representation `Z`, the output of the second encoder layer.
    pub z: Matrix,
    /// Raw head output: a logit for classification, the prediction for regression.
    pub output: Vec<f64>,
    pub cache: ForwardCache,
}

/// Gradients share the parameter layout.
pub type Gradients = Network;

impl Network {
    /// LeCun-normal weights (variance `1/fan_in`), zero biases.
    pub fn init(dims: NetworkDims, seed: u64) -> Self {
        let mut rng = CounterRng::new(seed);
        let first = Dense::lecun(dims.input, dims.hidden, &mut rng);
        let second = Dense::lecun(dims.hidden, dims.representation, &mut rng);
        let head = Dense::lecun(dims.representation, 1, &mut rng);
        Self {
            encoder: [first, second],
            head,
        }
    }

    pub fn zeros(dims: NetworkDims) -> Self {
        Self {
            encoder: [
                Dense::zeros(dims.input, dims.hidden),
                Dense::zeros(dims.hidden, dims.representation),
            ],
            head: Dense::zeros(dims.representation, 1),
        }
    }

    pub fn from_layers(encoder: [Dense; 2], head: Dense) -> Result<Self> {
        if encoder[0].fan_out() != encoder[1].fan_in() {
            return Err(Error::InvalidModel(format!(
                "encoder layers do not chain: {} outputs feed {} inputs",
                encoder[0].fan_out(),
                encoder[1].fan_in()
            )));
        }
        if head.fan_in() != encoder[1].fan_out() || head.fan_out() != 1 {
            return Err(Error::InvalidModel("head must map the representation to one output".into()));
        }
        let net = Self { encoder, head };
        NetworkDims::new(net.encoder[0].fan_in(), net.encoder[0].fan_out(), net.encoder[1].fan_out())?;
        if !net.encoder.iter().chain(core::iter::once(&net.head)).all(Dense::all_finite) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(net)
    }

    pub fn dims(&self) -> NetworkDims {
        NetworkDims {
            input: self.encoder[0].fan_in(),
            hidden: self.encoder[0].fan_out(),
            representation: self.encoder[1].fan_out(),
        }
    }

    pub fn encoder(&self) -> &[Dense; 2] {
        &self.encoder
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    pub fn param_count(&self) -> usize {
        self.dims().param_count()
    }

    /// All parameters in a fixed order: encoder layers, then the head; within
    /// a layer the row-major weights, then the bias.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.encoder[0]
            .values()
            .chain(self.encoder[1].values())
            .chain(self.head.values())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let [first, second] = &mut self.encoder;
        first
            .values_mut()
            .chain(second.values_mut())
            .chain(self.head.values_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        ensure_len("flat parameter vector", self.param_count(), values.len())?;
        self.params_mut().zip(values).for_each(|(p, v)| *p = *v);
        Ok(())
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardOutput> {
        ensure_len("network input width", self.dims().input, x.cols())?;
        if !x.all_finite() {
            return Err(Error::NonFinite("network input".into()));
        }
        let pre0 = self.encoder[0].apply(x)?;
        check_layer(&pre0, "encoder layer 1")?;
        let hidden = map(&pre0, selu);
        let pre1 = self.encoder[1].apply(&hidden)?;
        check_layer(&pre1, "encoder layer 2")?;
        let z = map(&pre1, selu);
        let out = self.head.apply(&z)?;
        check_layer(&out, "head")?;
        Ok(ForwardOutput {
            z,
            output: out.into_vec(),
            cache: ForwardCache {
                input: x.clone(),
                pre: [pre0, pre1],
                hidden,
            },
        })
    }

    /// Parameter gradients of a loss whose gradient is `d_output` at the
    /// head output and `d_z` (if any) directly at the representation.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], d_z: Option<&Matrix>) -> Result<Gradients> {
        let n = cache.input.rows();
        let m = self.dims().representation;
        ensure_len("output gradient length", n, d_output.len())?;
        let z = map(&cache.pre[1], selu);

        let mut head = Dense::zeros(m, 1);
        for (i, &g) in d_output.iter().enumerate() {
            for (w, &zi) in head.weights.as_mut_slice().iter_mut().zip(z.row(i)) {
                *w += g * zi;
            }
        }
        head.bias[0] = d_output.iter().sum();

        let mut dz = match d_z {
            Some(d) => {
                if d.rows() != n || d.cols() != m {
                    return Err(Error::DimensionMismatch {
                        context: "representation gradient",
                        expected: n * m,
                        actual: d.rows() * d.cols(),
                    });
                }
                d.clone()
            }
            None => Matrix::zeros(n, m),
        };
        let head_w = self.head.weights.as_slice();
        for (i, &g) in d_output.iter().enumerate() {
            dz.row_mut(i).iter_mut().zip(head_w).for_each(|(d, w)| *d += g * w);
        }

        let d_pre1 = mul_derivative(dz, &cache.pre[1]);
        let second = layer_gradient(&cache.hidden, &d_pre1)?;
        let d_hidden = d_pre1.matmul(&self.encoder[1].weights.transpose())?;
        let d_pre0 = mul_derivative(d_hidden, &cache.pre[0]);
        let first = layer_gradient(&cache.input, &d_pre0)?;
        Ok(Self {
            encoder: [first, second],
            head,
        })
    }
}

fn map(m: &Matrix, f: fn(f64) -> f64) -> Matrix {
    let data = m.as_slice().iter().map(|&v| f(v)).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("same shape")
}

fn mul_derivative(mut upstream: Matrix, pre: &Matrix) -> Matrix {
    upstream
        .as_mut_slice()
        .iter_mut()
        .zip(pre.as_slice())
        .for_each(|(g, &p)| *g *= selu_derivative(p));
    upstream
}

fn layer_gradient(input: &Matrix, d_pre: &Matrix) -> Result<Dense> {
    let weights = input.transpose().matmul(d_pre)?;
    let bias = (0..d_pre.cols()).map(|j| (0..d_pre.rows()).map(|i| d_pre[(i, j)]).sum()).collect();
    Ok(Dense { weights, bias })
}

fn check_layer(values: &Matrix, layer: &str) -> Result<()> {
    if values.all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{layer} pre-activation")))
    }
}

/// Adam with bias correction followed by decoupled weight decay
/// `θ ← θ·(1 − lr·weight_decay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl AdamW {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first: vec![0.0; param_count],
            second: vec![0.0; param_count],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` in place.
    pub fn step<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'a f64>,
    ) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(t));
        let decay = 1.0 - self.lr * self.weight_decay;
        for (((p, &g), m), v) in params.zip(grads).zip(&mut self.first).zip(&mut self.second) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
            *p *= decay;
        }
    }

    pub fn step_network(&mut self, net: &mut Network, grads: &Gradients) {
        self.step(net.params_mut(), grads.params());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_relative_error};

    fn dims(d: usize, h: usize, m: usize) -> NetworkDims {
        NetworkDims::new(d, h, m).unwrap()
    }

    #[test]
    fn selu_closed_forms() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - 1.050_70).abs() < 1e-5);
        assert!((selu(-50.0) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-15);
        assert!((selu(-50.0) + 1.758_09).abs() < 1e-5);
        assert!((selu(1e-300) - selu(-1e-300)).abs() < 1e-299);
    }

    #[test]
    fn parameter_count() {
        // 2·50+50 + 50·50+50 + 50·1+1
        assert_eq!(dims(2, 50, 50).param_count(), 2751);
        assert_eq!(Network::init(dims(2, 50, 50), 0).to_flat().len(), 2751);
    }

    #[test]
    fn same_seed_same_parameters() {
        assert_eq!(Network::init(dims(5, 8, 4), 3), Network::init(dims(5, 8, 4), 3));
        assert_ne!(Network::init(dims(5, 8, 4), 3), Network::init(dims(5, 8, 4), 4));
    }

    #[test]
    fn lecun_variance() {
        let net = Network::init(dims(50, 50, 50), 1);
        let w = net.encoder()[1].weights.as_slice();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var * 50.0 - 1.0).abs() < 0.2, "{var}");
        assert!(net.encoder()[1].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::zeros(dims(3, 4, 2));
        let x = Matrix::from_fn(5, 3, |i, j| (i + j) as f64);
        let out = net.forward(&x).unwrap();
        assert!(out.z.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.output.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_row_forward_matches_batch() {
        let net = Network::init(dims(3, 6, 4), 2);
        let mut rng = CounterRng::new(5);
        let x = Matrix::from_vec(7, 3, rng.normals(21)).unwrap();
        let batch = net.forward(&x).unwrap();
        for i in 0..7 {
            let one = net.forward(&x.select_rows(&[i])).unwrap();
            assert_eq!(one.z.row(0), batch.z.row(i));
            assert_eq!(one.output[0], batch.output[i]);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let net = Network::init(dims(2, 4, 3), 1);
        let x = Matrix::from_fn(4, 2, |i, j| i as f64 - j as f64);
        let out = net.forward(&x).unwrap();
        let g = net.backward(&out.cache, &[0.0; 4], Some(&Matrix::zeros(4, 3))).unwrap();
        assert!(g.params().all(|&v| v == 0.0));
    }

    #[test]
    fn representation_gradient_leaves_head_untouched() {
        let net = Network::init(dims(2, 4, 3), 1);
        let mut rng = CounterRng::new(2);
        let x = Matrix::from_vec(4, 2, rng.normals(8)).unwrap();
        let out = net.forward(&x).unwrap();
        let dz = Matrix::from_vec(4, 3, rng.normals(12)).unwrap();
        let g = net.backward(&out.cache, &[0.0; 4], Some(&dz)).unwrap();
        assert!(g.head().values().all(|&v| v == 0.0));
        assert!(g.encoder()[0].values().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = CounterRng::new(7);
        let net = Network::init(dims(2, 4, 3), 11);
        let x = Matrix::from_vec(5, 2, rng.normals(10)).unwrap();
        let c_out = rng.normals(5);
        let c_z = Matrix::from_vec(5, 3, rng.normals(15)).unwrap();
        // L = Σ c_out·ŷ + Σ c_z∘Z (linear in the outputs, so upstream gradients are the coefficients)
        let loss = |flat: &[f64]| {
            let mut n = net.clone();
            n.set_flat(flat).unwrap();
            let o = n.forward(&x).unwrap();
            let a: f64 = o.output.iter().zip(&c_out).map(|(p, c)| p * c).sum();
            let b: f64 = o.z.as_slice().iter().zip(c_z.as_slice()).map(|(p, c)| p * c).sum();
            a + b
        };
        let out = net.forward(&x).unwrap();
        let analytic = net.backward(&out.cache, &c_out, Some(&c_z)).unwrap().to_flat();
        let numeric = central_difference(loss, &net.to_flat(), 1e-5);
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn from_layers_validates_shapes() {
        let net = Network::init(dims(2, 4, 3), 0);
        let [a, b] = net.encoder().clone();
        assert!(Network::from_layers([a.clone(), b.clone()], net.head().clone()).is_ok());
        assert!(Network::from_layers([b.clone(), a.clone()], net.head().clone()).is_err());
        assert!(Network::from_layers([a, b], Dense::zeros(2, 1)).is_err());
    }

    #[test]
    fn adam_zero_gradient_without_decay_is_identity() {
        let mut p = std::vec![1.0, -2.0, 0.5];
        let mut opt = AdamW::new(3, 1e-3, 0.0);
        opt.step(p.iter_mut(), [0.0; 3].iter());
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = std::vec![0.0, 0.0, 0.0];
        let mut opt = AdamW::new(3, 1e-3, 0.0);
        opt.step(p.iter_mut(), [0.3, -5.0, 1e-3].iter());
        for (v, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((v - s * 1e-3).abs() < 1e-8, "{v}");
        }
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_decoupled_decay() {
        let mut p = std::vec![2.0];
        let mut opt = AdamW::new(1, 0.1, 0.5);
        opt.step(p.iter_mut(), [0.0].iter());
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
    }
}
