use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Leaves everything untouched and names the
/// offending tensor if any gradient is non-finite.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(Error::Contract("adam_step: params, grads and state differ in layout".into()));
    }
    for (name, g) in grads.iter() {
        if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.eps));
    let one = T::one();
    for (((p, g), m), v) in params
        .tensors_mut()
        .iter_mut()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + (one - b1) * gi;
            *vi = b2 * *vi + (one - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
