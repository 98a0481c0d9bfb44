//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::siren::{zeros_like, Gradients, Layer, Real, SirenModel};

pub const DEFAULT_LR: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidSettings(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(Error::InvalidSettings(format!(
                "betas must lie in (0, 1), got {} and {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidSettings(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub step: u64,
    pub m: Vec<Layer<F>>,
    pub v: Vec<Layer<F>>,
    pub params: AdamParams,
}

impl<F: Real> AdamState<F> {
    pub fn new(model: &SirenModel<F>, params: AdamParams) -> Result<Self> {
        params.validate()?;
        Ok(AdamState {
            step: 0,
            m: zeros_like(&model.layers),
            v: zeros_like(&model.layers),
            params,
        })
    }
}

fn same_shapes<F>(a: &[Layer<F>], b: &[Layer<F>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.weight.dim() == y.weight.dim() && x.bias.dim() == y.bias.dim())
}

/// One Adam update of `model` in place.
pub fn adam_step<F: Real>(
    model: &mut SirenModel<F>,
    grads: &Gradients<F>,
    state: &mut AdamState<F>,
) -> Result<()> {
    if !same_shapes(&model.layers, grads) || !same_shapes(&model.layers, &state.m) {
        return Err(Error::Shape(
            "gradients or optimizer state do not match the model".into(),
        ));
    }
    state.step += 1;
    let p = state.params;
    let t = state.step as i32;
    let (b1, b2) = (F::of(p.beta1), F::of(p.beta2));
    let (one_b1, one_b2) = (F::of(1.0 - p.beta1), F::of(1.0 - p.beta2));
    let corr1 = F::of(1.0 - p.beta1.powi(t));
    let corr2 = F::of(1.0 - p.beta2.powi(t));
    let lr = F::of(p.lr);
    let eps = F::of(p.eps);

    for (((layer, g), m), v) in model
        .layers
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((theta, g), m), v) in layer
            .values_mut()
            .zip(g.values())
            .zip(m.values_mut())
            .zip(v.values_mut())
        {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
