use super::params::ParameterStore;
use super::tensor::Tensor;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per registered parameter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParameterStore, config: AdamConfig) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update over every trainable parameter, then zeroes
/// all gradient accumulators. Frozen parameters and their moments are left
/// untouched.
pub fn adam_step(store: &mut ParameterStore, state: &mut AdamState) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for (id, p) in store.iter() {
        let m = &state.m[id.index()];
        if m.shape() != p.value.shape() || p.grad.shape() != p.value.shape() {
            return Err(Error::Shape(format!("moments of `{}`", p.name)));
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for (id, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let g = p.grad.data();
        let w = p.value.data_mut();
        for k in 0..w.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    store.zero_grads();
    Ok(())
}
