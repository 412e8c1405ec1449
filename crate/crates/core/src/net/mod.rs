//! Fully connected feed-forward networks with leaky-ReLU hidden layers,
//! trained by mini-batch AdaMax.
//!
//! Samples are stored as matrix columns throughout, so a batch of `B`
//! inputs of width `d` is a `d x B` matrix.

mod bundle;
mod dataset;
mod optim;
mod train;

pub use bundle::{read_bundle, write_bundle, NetworkJson, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use dataset::{Dataset, Provenance};
pub use optim::{adamax_step, adamax_update, AdaMaxConfig, AdaMaxState};
pub use train::{
    gradient, loss_standard, loss_weighted, rollout, rollout_per_step, train, Gradients, LossConfig, LossSpec,
    TrainingConfig, TrainingHistory,
};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default negative-side slope of the leaky ReLU.
pub const DEFAULT_SLOPE: f64 = 0.01;

/// Activation applied after the last affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Linear,
    /// Same leaky ReLU as the hidden layers.
    LeakyRelu,
}

/// Per-feature affine maps applied around the core network:
/// `predict(x) = out_mean + out_scale * forward(in_scale * (x - in_mean))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub in_mean: Vec<f64>,
    /// `1 / std`, or 0 for features that were constant in training.
    pub in_scale: Vec<f64>,
    pub out_mean: Vec<f64>,
    /// `std`, or 1 for constant targets.
    pub out_scale: Vec<f64>,
}

fn column_stats(data: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = data.ncols() as f64;
    let mut mean = Vec::with_capacity(data.nrows());
    let mut std = Vec::with_capacity(data.nrows());
    for row in data.row_iter() {
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        mean.push(mu);
        std.push(var.sqrt());
    }
    (mean, std)
}

fn is_constant(std: f64, mean: f64) -> bool {
    std <= 1e-12 * mean.abs().max(1.0)
}

impl Normalization {
    /// Statistics of the columns of `x` and `y`.
    pub fn fit(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let (in_mean, in_std) = column_stats(x);
        let (out_mean, out_std) = column_stats(y);
        let in_scale = in_std
            .iter()
            .zip(&in_mean)
            .map(|(&s, &m)| if is_constant(s, m) { 0.0 } else { 1.0 / s })
            .collect();
        let out_scale = out_std
            .iter()
            .zip(&out_mean)
            .map(|(&s, &m)| if is_constant(s, m) { 1.0 } else { s })
            .collect();
        Self {
            in_mean,
            in_scale,
            out_mean,
            out_scale,
        }
    }

    pub fn inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.in_mean[i]) * self.in_scale[i])
    }

    pub fn targets(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| (y[(i, j)] - self.out_mean[i]) / self.out_scale[i])
    }

    pub fn outputs(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| self.out_mean[i] + self.out_scale[i] * z[(i, j)])
    }
}

/// Multi-layer perceptron `x -> W_L s(... s(W_1 x + b_1) ...) + b_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    dims: Vec<usize>,
    pub(crate) weights: Vec<DMatrix<f64>>,
    pub(crate) biases: Vec<DVector<f64>>,
    slope: f64,
    output: OutputActivation,
    seed: u64,
    normalization: Option<Normalization>,
}

#[inline]
fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// Layer sizes `[d_in, hidden..., d_out]` for `depth` hidden layers of `width`.
pub fn layer_dims(d_in: usize, depth: usize, width: usize, d_out: usize) -> Vec<usize> {
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat(width).take(depth));
    dims.push(d_out);
    dims
}

/// Network with He-uniform weights `U(-sqrt(6/fan_in), sqrt(6/fan_in))`
/// and zero biases.
pub fn init_network(dims: &[usize], seed: u64, slope: f64, output: OutputActivation) -> Result<Network> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "network needs at least two positive layer sizes, got {dims:?}"
        )));
    }
    if !slope.is_finite() {
        return Err(Error::InvalidArgument("leaky slope must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(dims.len() - 1);
    let mut biases = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        // filled row by row so the draw order matches the row-major layout
        let mut m = DMatrix::zeros(fan_out, fan_in);
        for i in 0..fan_out {
            for j in 0..fan_in {
                m[(i, j)] = rng.gen_range(-bound..bound);
            }
        }
        weights.push(m);
        biases.push(DVector::zeros(fan_out));
    }
    Ok(Network {
        dims: dims.to_vec(),
        weights,
        biases,
        slope,
        output,
        seed,
        normalization: None,
    })
}

/// Activations of every layer for a batch, kept for backpropagation.
pub(crate) struct Trace {
    /// `pre[l]`: pre-activation of layer `l + 1`.
    pub pre: Vec<DMatrix<f64>>,
    /// `post[0]` is the input; `post[l]` the output of layer `l`.
    pub post: Vec<DMatrix<f64>>,
}

impl Network {
    /// Builds a network from explicit parameters.
    pub fn from_parts(
        weights: Vec<DMatrix<f64>>,
        biases: Vec<DVector<f64>>,
        slope: f64,
        output: OutputActivation,
        seed: u64,
        normalization: Option<Normalization>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidArgument("need one bias per weight matrix".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for (w, b) in weights.iter().zip(&biases) {
            if w.ncols() != *dims.last().unwrap() {
                return Err(Error::dim("weight columns", *dims.last().unwrap(), w.ncols()));
            }
            if b.len() != w.nrows() {
                return Err(Error::dim("bias length", w.nrows(), b.len()));
            }
            dims.push(w.nrows());
        }
        if let Some(n) = &normalization {
            if n.in_mean.len() != dims[0] || n.in_scale.len() != dims[0] {
                return Err(Error::dim("input normalization", dims[0], n.in_mean.len()));
            }
            let d_out = *dims.last().unwrap();
            if n.out_mean.len() != d_out || n.out_scale.len() != d_out {
                return Err(Error::dim("output normalization", d_out, n.out_mean.len()));
            }
        }
        let all_finite = weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && biases.iter().all(|b| b.iter().all(|v| v.is_finite()));
        if !all_finite {
            return Err(Error::NumericalRange("network parameters are not finite".into()));
        }
        Ok(Self {
            dims,
            weights,
            biases,
            slope,
            output,
            seed,
            normalization,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[DVector<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [DMatrix<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [DVector<f64>] {
        &mut self.biases
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn set_normalization(&mut self, n: Option<Normalization>) {
        self.normalization = n;
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn activate(&self, layer: usize, v: f64) -> f64 {
        let last = layer + 1 == self.weights.len();
        if last && self.output == OutputActivation::Linear {
            v
        } else {
            leaky(v, self.slope)
        }
    }

    /// Derivative of layer `layer`'s activation at pre-activation `v`; at 0
    /// the negative-side slope is used.
    pub(crate) fn activation_slope(&self, layer: usize, v: f64) -> f64 {
        let last = layer + 1 == self.weights.len();
        if last && self.output == OutputActivation::Linear {
            1.0
        } else if v > 0.0 {
            1.0
        } else {
            self.slope
        }
    }

    pub(crate) fn trace(&self, x: &DMatrix<f64>) -> Trace {
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut post = Vec::with_capacity(self.weights.len() + 1);
        post.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * post.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let a = z.map(|v| self.activate(l, v));
            pre.push(z);
            post.push(a);
        }
        Trace { pre, post }
    }

    fn check_input(&self, rows: usize) -> Result<()> {
        if rows != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), rows));
        }
        Ok(())
    }

    /// Core network on a batch of columns, without normalization.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x.nrows())?;
        let mut a = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &a;
            for mut col in z.column_iter_mut() {
                col += b;
            }
            z.apply(|v| *v = self.activate(l, *v));
            a = z;
        }
        Ok(a)
    }

    /// Core network on one input vector, without normalization.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalRange("network input is not finite".into()));
        }
        let out = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok(out.column(0).into_owned())
    }

    /// Network with its stored normalization applied on a batch of columns.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x.nrows())?;
        match &self.normalization {
            Some(n) => Ok(n.outputs(&self.forward_batch(&n.inputs(x))?)),
            None => self.forward_batch(x),
        }
    }

    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let out = self.predict_batch(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
        Ok(out.column(0).into_owned())
    }

    /// Parameters flattened layer by layer: row-major weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    out.push(w[(i, j)]);
                }
            }
            out.extend(b.iter());
        }
        out
    }

    /// Inverse of [`Network::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::dim("flat parameters", self.n_params(), flat.len()));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = flat[k];
                    k += 1;
                }
            }
            for v in b.iter_mut() {
                *v = flat[k];
                k += 1;
            }
        }
        Ok(())
    }
}
