use crate::error::{Result, WalError};
use crate::model::{ModelParams, DISCRIMINATOR_TENSORS};

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub velocity: ModelParams,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        OptimizerState {
            velocity: params.zeros_like(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdHyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Which tensors a step may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateScope {
    All,
    /// Leaves bvf, a_adv and b_adv (and their velocity) untouched.
    SkipDiscriminator,
}

/// `velocity ← momentum·velocity + grad + weight_decay·param`,
/// `param ← param − lr·velocity`.
pub fn sgd_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
    hyper: SgdHyper,
    scope: UpdateScope,
) -> Result<()> {
    let sig = params.shape_signature();
    if grads.shape_signature() != sig {
        return Err(WalError::invalid("gradients", "shape does not match parameters"));
    }
    if state.velocity.shape_signature() != sig {
        return Err(WalError::invalid("optimizer state", "shape does not match parameters"));
    }
    let SgdHyper {
        lr,
        momentum,
        weight_decay,
    } = hyper;
    for (k, ((p, g), v)) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.velocity.tensors_mut())
        .enumerate()
    {
        if scope == UpdateScope::SkipDiscriminator && DISCRIMINATOR_TENSORS.contains(&k) {
            continue;
        }
        for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi + gi + weight_decay * *pi;
            *pi -= lr * *vi;
        }
    }
    Ok(())
}
