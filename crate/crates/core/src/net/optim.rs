use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Gradients, Network};

/// AdaMax hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaMaxConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Added to the infinity-norm estimate before dividing.
    pub epsilon: f64,
}

impl Default for AdaMaxConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdaMaxConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.beta1) || !in_unit(self.beta2) {
            return Err(Error::InvalidArgument(format!(
                "decay rates must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.learning_rate > 0.0) || !(self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// First moment and infinity-norm estimates, plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaMaxState {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub t: u64,
}

impl AdaMaxState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            u: vec![0.0; n_params],
            t: 0,
        }
    }
}

/// One AdaMax update of `params` in place. Returns the largest absolute
/// change applied to any coordinate.
pub fn adamax_update(state: &mut AdaMaxState, params: &mut [f64], grads: &[f64], cfg: &AdaMaxConfig) -> f64 {
    assert_eq!(params.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(params.len(), state.m.len(), "optimizer state does not match parameters");
    state.t += 1;
    let lr_t = cfg.learning_rate / (1.0 - cfg.beta1.powi(state.t.min(i32::MAX as u64) as i32));
    let mut largest: f64 = 0.0;
    for (((p, &g), m), u) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.u.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *u = (cfg.beta2 * *u).max(g.abs());
        let step = lr_t * *m / (*u + cfg.epsilon);
        *p -= step;
        largest = largest.max(step.abs());
    }
    largest
}

/// AdaMax update of a network's parameters.
pub fn adamax_step(state: &mut AdaMaxState, net: &mut Network, grads: &Gradients, cfg: &AdaMaxConfig) -> Result<f64> {
    let mut params = net.flat_params();
    let g = grads.flat();
    if g.len() != params.len() {
        return Err(Error::dim("gradient length", params.len(), g.len()));
    }
    let largest = adamax_update(state, &mut params, &g, cfg);
    net.set_flat_params(&params)?;
    Ok(largest)
}
