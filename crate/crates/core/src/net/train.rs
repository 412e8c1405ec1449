use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{adamax_step, AdaMaxConfig, AdaMaxState, Dataset, Network, Normalization, Provenance};

/// Loss to evaluate or differentiate, with raw per-provenance weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// `(1/N) sum_j |y_j - N(x_j)|^2`
    Standard,
    /// `w_obs sum_obs |r_j|^2 + w_sim sum_sim |r_j|^2`
    Weighted { w_obs: f64, w_sim: f64 },
}

/// Loss used for training. Weighted losses are given as relative weights
/// and rescaled so that `N_obs w_obs + N_sim w_sim = 1` over the training
/// set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossConfig {
    #[default]
    Standard,
    Weighted { w_obs: f64, w_sim: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdaMaxConfig,
    pub loss: LossConfig,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Standardize inputs and targets with training-set statistics.
    pub normalize: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            optimizer: AdaMaxConfig::default(),
            loss: LossConfig::Standard,
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if let LossConfig::Weighted { w_obs, w_sim } = self.loss {
            if !(w_sim > 0.0 && w_obs > w_sim && w_obs.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "weighted loss needs w_obs > w_sim > 0, got {w_obs} and {w_sim}"
                )));
            }
        }
        Ok(())
    }
}

/// Mean training loss per epoch, in standardized units when normalization
/// is on.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub losses: Vec<f64>,
}

/// Gradient of a loss with respect to every weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    /// Same layout as [`Network::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let n = self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>();
        let mut out = Vec::with_capacity(n);
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

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }
}

fn pair_weights(ds: &Dataset, spec: &LossSpec) -> Vec<f64> {
    match *spec {
        LossSpec::Standard => vec![1.0 / ds.len() as f64; ds.len()],
        LossSpec::Weighted { w_obs, w_sim } => ds
            .provenance()
            .iter()
            .map(|p| match p {
                Provenance::Observation => w_obs,
                Provenance::Simulation => w_sim,
            })
            .collect(),
    }
}

/// `sum_j w_j |y_j - predict(x_j)|^2` and its gradient.
fn loss_and_gradient(net: &Network, x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) -> Result<(f64, Gradients)> {
    if x.nrows() != net.input_dim() {
        return Err(Error::dim("batch inputs", net.input_dim(), x.nrows()));
    }
    if y.nrows() != net.output_dim() {
        return Err(Error::dim("batch targets", net.output_dim(), y.nrows()));
    }
    let (xin, out_scale, out_mean) = match net.normalization() {
        Some(n) => (n.inputs(x), Some(&n.out_scale), Some(&n.out_mean)),
        None => (x.clone(), None, None),
    };
    let trace = net.trace(&xin);
    let out = trace.post.last().unwrap();
    let n_out = out.nrows();
    let mut loss = 0.0;
    // d loss / d out
    let mut delta = DMatrix::zeros(n_out, out.ncols());
    for j in 0..out.ncols() {
        for i in 0..n_out {
            let (scale, mean) = match (out_scale, out_mean) {
                (Some(s), Some(m)) => (s[i], m[i]),
                _ => (1.0, 0.0),
            };
            let r = y[(i, j)] - (mean + scale * out[(i, j)]);
            loss += w[j] * r * r;
            delta[(i, j)] = -2.0 * w[j] * r * scale;
        }
    }
    let n_layers = net.n_layers();
    let mut gw = vec![DMatrix::zeros(0, 0); n_layers];
    let mut gb = vec![DVector::zeros(0); n_layers];
    for l in (0..n_layers).rev() {
        let pre = &trace.pre[l];
        for (d, &z) in delta.iter_mut().zip(pre.iter()) {
            *d *= net.activation_slope(l, z);
        }
        gw[l] = &delta * trace.post[l].transpose();
        gb[l] = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
        if l > 0 {
            delta = net.weights[l].transpose() * &delta;
        }
    }
    Ok((
        loss,
        Gradients {
            weights: gw,
            biases: gb,
        },
    ))
}

fn residual_sums(net: &Network, ds: &Dataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.output_dim() != net.output_dim() {
        return Err(Error::dim("dataset targets", net.output_dim(), ds.output_dim()));
    }
    let pred = net.predict_batch(ds.inputs())?;
    let r = ds.targets() - pred;
    Ok(r.column_iter().map(|c| c.norm_squared()).collect())
}

/// Mean squared Euclidean residual over the dataset.
pub fn loss_standard(net: &Network, ds: &Dataset) -> Result<f64> {
    let r = residual_sums(net, ds)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Observation residuals weighted by `w_obs`, simulation residuals by `w_sim`.
pub fn loss_weighted(net: &Network, ds: &Dataset, w_obs: f64, w_sim: f64) -> Result<f64> {
    let r = residual_sums(net, ds)?;
    let w = pair_weights(ds, &LossSpec::Weighted { w_obs, w_sim });
    Ok(r.iter().zip(&w).map(|(a, b)| a * b).sum())
}

/// Exact gradient of the given loss over `batch`.
pub fn gradient(net: &Network, batch: &Dataset, spec: &LossSpec) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let w = pair_weights(batch, spec);
    Ok(loss_and_gradient(net, batch.inputs(), batch.targets(), &w)?.1)
}

/// Mini-batch AdaMax training.
///
/// With normalization on, statistics are fitted to `ds` and the loss is
/// taken on standardized targets; the returned network carries the
/// statistics so [`Network::predict`] works in data units. Each mini-batch
/// of size `B` minimizes `(N/B) sum_batch w_j |r_j|^2`, an unbiased estimate
/// of the full loss `sum_j w_j |r_j|^2`.
pub fn train(net: &Network, ds: &Dataset, cfg: &TrainingConfig) -> Result<(Network, TrainingHistory)> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok((net.clone(), TrainingHistory::default()));
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if ds.input_dim() != net.input_dim() {
        return Err(Error::dim("training inputs", net.input_dim(), ds.input_dim()));
    }
    if ds.output_dim() != net.output_dim() {
        return Err(Error::dim("training targets", net.output_dim(), ds.output_dim()));
    }
    let n = ds.len();
    let weights: Vec<f64> = match cfg.loss {
        LossConfig::Standard => vec![1.0 / n as f64; n],
        LossConfig::Weighted { w_obs, w_sim } => {
            let raw = pair_weights(ds, &LossSpec::Weighted { w_obs, w_sim });
            let total: f64 = raw.iter().sum();
            raw.iter().map(|w| w / total).collect()
        }
    };
    let norm = cfg.normalize.then(|| Normalization::fit(ds.inputs(), ds.targets()));
    let (xs, ys) = match &norm {
        Some(nz) => (nz.inputs(ds.inputs()), nz.targets(ds.targets())),
        None => (ds.inputs().clone(), ds.targets().clone()),
    };

    let mut work = net.clone();
    work.set_normalization(None);
    let mut state = AdaMaxState::new(work.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainingHistory::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xs.select_columns(chunk);
            let yb = ys.select_columns(chunk);
            let scale = n as f64 / chunk.len() as f64;
            let wb: Vec<f64> = chunk.iter().map(|&j| weights[j] * scale).collect();
            let (loss, grads) = loss_and_gradient(&work, &xb, &yb, &wb)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * chunk.len() as f64 / n as f64;
            adamax_step(&mut state, &mut work, &grads, &cfg.optimizer)?;
        }
        if !epoch_loss.is_finite() || work.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch, loss: epoch_loss });
        }
        history.losses.push(epoch_loss);
    }
    work.set_normalization(norm);
    Ok((work, history))
}

fn check_rollout(net: &Network, c0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<()> {
    if net.output_dim() != c0.len() {
        return Err(Error::dim("rollout state", net.output_dim(), c0.len()));
    }
    for i in inputs {
        if c0.len() + i.len() != net.input_dim() {
            return Err(Error::dim("rollout encoding", net.input_dim() - c0.len(), i.len()));
        }
    }
    Ok(())
}

fn concat(c: &DVector<f64>, i: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(c.len() + i.len(), c.iter().chain(i.iter()).copied())
}

/// `c_{n+1} = predict(c_n, I_{n+1})` for each encoded input; returns
/// `c_0 .. c_k`.
pub fn rollout(net: &Network, c0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    check_rollout(net, c0, inputs)?;
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(c0.clone());
    for i in inputs {
        let next = net.predict(&concat(states.last().unwrap(), i))?;
        states.push(next);
    }
    Ok(states)
}

/// Rollout with a separate network for each step: `nets[n]` maps step `n`
/// to step `n + 1`.
pub fn rollout_per_step(nets: &[Network], c0: &DVector<f64>, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if nets.len() != inputs.len() {
        return Err(Error::dim("per-step networks", inputs.len(), nets.len()));
    }
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(c0.clone());
    for (net, i) in nets.iter().zip(inputs) {
        check_rollout(net, states.last().unwrap(), std::slice::from_ref(i))?;
        let next = net.predict(&concat(states.last().unwrap(), i))?;
        states.push(next);
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, OutputActivation};

    fn single_pair(x: &[f64], y: &[f64], tag: Provenance) -> Dataset {
        Dataset::from_pairs(
            &[(DVector::from_column_slice(x), DVector::from_column_slice(y))],
            vec![tag],
            vec![0],
            vec![0],
        )
        .unwrap()
    }

    fn zero_net(d_in: usize, d_out: usize) -> Network {
        let mut net = init_network(&[d_in, d_out], 0, 0.01, OutputActivation::Linear).unwrap();
        net.set_flat_params(&vec![0.0; net.n_params()]).unwrap();
        net
    }

    #[test]
    fn three_four_five() {
        let ds = single_pair(&[1.0], &[3.0, 4.0], Provenance::Simulation);
        assert_eq!(loss_standard(&zero_net(1, 2), &ds).unwrap(), 25.0);
    }

    #[test]
    fn mean_over_pairs() {
        let a = single_pair(&[0.0], &[1.0, 1.0], Provenance::Simulation);
        let b = single_pair(&[0.0], &[2.0, 0.0], Provenance::Simulation);
        let ds = a.concat(&b).unwrap();
        assert_eq!(loss_standard(&zero_net(1, 2), &ds).unwrap(), 3.0);
    }

    #[test]
    fn weighted_arithmetic() {
        let mut ds = single_pair(&[0.0], &[1.0], Provenance::Observation);
        ds = ds.concat(&single_pair(&[0.0], &[-1.0], Provenance::Observation)).unwrap();
        for _ in 0..3 {
            ds = ds.concat(&single_pair(&[0.0], &[1.0], Provenance::Simulation)).unwrap();
        }
        assert_eq!(loss_weighted(&zero_net(1, 1), &ds, 2.0, 1.0).unwrap(), 7.0);
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = single_pair(&[0.0], &[1.0], Provenance::Observation).select(&[]);
        assert!(matches!(loss_standard(&zero_net(1, 1), &ds), Err(Error::EmptyDataset)));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let net = init_network(&[2, 3, 1], 4, 0.01, OutputActivation::Linear).unwrap();
        let ds = single_pair(&[0.3, 0.1], &[1.0], Provenance::Simulation);
        let cfg = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        let (out, hist) = train(&net, &ds, &cfg).unwrap();
        assert_eq!(out, net);
        assert!(hist.losses.is_empty());
    }

    #[test]
    fn weighted_config_validated() {
        let cfg = TrainingConfig {
            loss: LossConfig::Weighted { w_obs: 1.0, w_sim: 2.0 },
            ..TrainingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rollout_checks_encoding() {
        let net = init_network(&[3, 2], 0, 0.01, OutputActivation::Linear).unwrap();
        let c0 = DVector::zeros(2);
        assert!(rollout(&net, &c0, &[DVector::zeros(2)]).is_err());
        assert_eq!(rollout(&net, &c0, &[DVector::zeros(1)]).unwrap().len(), 2);
    }
}
