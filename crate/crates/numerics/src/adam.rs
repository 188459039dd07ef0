//! Adam with bias correction.

use crate::error::{shape_err, Result};
use crate::scalar::{lit, Real};
use crate::tensor::Tensor;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[&Tensor<T>]) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
        }
    }
}

/// One Adam update of every parameter in place.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&[T]],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err("adam_step", "parameter/gradient/state counts differ"));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (lit::<T>(cfg.beta1), lit::<T>(cfg.beta2));
    let c1 = lit::<T>(1.0 - cfg.beta1.powi(t));
    let c2 = lit::<T>(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (lit::<T>(lr), lit::<T>(cfg.eps));
    let one = T::one();
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i];
        if g.len() != p.numel() || state.m[i].len() != p.numel() {
            return Err(shape_err("adam_step", format!("parameter {i} size mismatch")));
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
