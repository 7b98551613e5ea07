//! Adam optimization with a constant-then-linear-decay learning-rate
//! schedule.

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::nn::Model;

/// Adam moment hyperparameters. beta1 = 0.5 follows the convention of the
/// GAN family this crate trains; both betas stay configurable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates mirroring one model's parameter list,
/// plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        let zeros: Vec<Vec<f64>> = model
            .parameters()
            .iter()
            .map(|p| vec![0.0; p.value.numel()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction over every model parameter.
/// Parameters absent from `grads` (not reached by the swept loss) are
/// treated as having zero gradient.
pub fn adam_step(
    model: &mut Model,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    hyper: &AdamHyper,
) -> Result<()> {
    if lr < 0.0 || !(0.0..1.0).contains(&hyper.beta1) || !(0.0..1.0).contains(&hyper.beta2) {
        return Err(Error::InvalidArg {
            op: "adam_step",
            msg: format!(
                "need lr >= 0 and betas in [0, 1): lr={lr}, beta1={}, beta2={}",
                hyper.beta1, hyper.beta2
            ),
        });
    }
    if model.parameters().len() != state.m.len() {
        return Err(Error::InvalidArg {
            op: "adam_step",
            msg: format!(
                "optimizer state tracks {} parameters, model has {}",
                state.m.len(),
                model.parameters().len()
            ),
        });
    }
    state.t = state
        .t
        .checked_add(1)
        .ok_or_else(|| Error::InvalidArg {
            op: "adam_step",
            msg: "step counter overflow".into(),
        })?;
    let t = state.t;
    let bias1 = 1.0 - hyper.beta1.powi(t as i32);
    let bias2 = 1.0 - hyper.beta2.powi(t as i32);

    for (i, p) in model.parameters_mut().iter_mut().enumerate() {
        let n = p.value.numel();
        if state.m[i].len() != n {
            return Err(Error::DimMismatch {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: vec![state.m[i].len()],
            });
        }
        let grad = grads.wrt(&p.value);
        if let Some(g) = grad {
            if g.numel() != n {
                return Err(Error::DimMismatch {
                    op: "adam_step",
                    lhs: p.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let data = p.value.data_mut();
        for j in 0..n {
            let g = grad.map_or(0.0, |g| g.data()[j]);
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g;
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            data[j] -= lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

/// Learning-rate schedule: constant for `fixed_epochs`, then linear decay
/// to zero over `decay_epochs`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub base_lr: f64,
    pub fixed_epochs: u64,
    pub decay_epochs: u64,
}

/// Learning rate for a zero-based epoch index. Epochs past the end of the
/// decay window return 0.
pub fn lr_at(schedule: &Schedule, epoch: u64) -> f64 {
    if epoch < schedule.fixed_epochs {
        return schedule.base_lr;
    }
    if schedule.decay_epochs == 0 {
        return 0.0;
    }
    let into_decay = epoch - schedule.fixed_epochs;
    if into_decay >= schedule.decay_epochs {
        return 0.0;
    }
    let remaining = (schedule.decay_epochs - into_decay) as f64;
    schedule.base_lr * remaining / schedule.decay_epochs as f64
}
