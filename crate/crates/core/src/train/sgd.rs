use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamSet;

/// SGD with classic momentum and coupled L2 weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdConfig {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        let c = Self { lr, momentum, weight_decay };
        c.validate()?;
        Ok(c)
    }

    pub fn stage1_default() -> Self {
        Self { lr: 1e-4, momentum: 0.9, weight_decay: 5e-4 }
    }

    pub fn stage2_default() -> Self {
        Self { lr: 1e-2, momentum: 0.9, weight_decay: 5e-4 }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        Self { lr, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0,1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

fn check_shapes<P: ParamSet>(a: &P, b: &P, what: &str) -> Result<()> {
    let (ba, bb) = (a.blobs(), b.blobs());
    if ba.len() != bb.len() || ba.iter().zip(&bb).any(|((na, xa), (nb, xb))| na != nb || xa.len() != xb.len()) {
        return Err(Error::Dimension(format!("{what} do not match parameter shapes")));
    }
    Ok(())
}

/// `v ← m·v + g + wd·p;  p ← p − lr·v`
pub fn sgd_step<P: ParamSet>(params: &mut P, grads: &P, velocity: &mut P, cfg: &SgdConfig) -> Result<()> {
    check_shapes(params, grads, "gradients")?;
    check_shapes(params, velocity, "velocities")?;
    let SgdConfig { lr, momentum, weight_decay } = *cfg;
    for (((_, p), (_, g)), (_, v)) in params.blobs_mut().into_iter().zip(grads.blobs()).zip(velocity.blobs_mut()) {
        for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = momentum * *v + g + weight_decay * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}

/// Global L2 norm over every blob.
pub fn grad_norm<P: ParamSet>(grads: &P) -> f64 {
    grads.blobs().iter().flat_map(|(_, b)| b.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Rescales `grads` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<P: ParamSet>(grads: &mut P, max_norm: f64) -> f64 {
    let n = grad_norm(grads);
    if n > max_norm {
        grads.scale(max_norm / n);
    }
    n
}
