//! Scalar losses. Every loss here is minimised.

use crate::error::{Result, WalError};
use crate::linalg::{sigmoid, softplus};
use crate::model::{GateDecision, SamplerKind};

/// Binary cross-entropy on a logit, `−[y log σ(f) + (1−y) log(1−σ(f))]`,
/// evaluated as `softplus(f) − y f`.
pub fn bce_loss(y: u8, f: f64) -> Result<f64> {
    if y > 1 {
        return Err(WalError::invalid("label", format!("must be 0 or 1, got {y}")));
    }
    Ok(bce(y, f))
}

#[inline]
pub(crate) fn bce(y: u8, f: f64) -> f64 {
    // log(1 - σ(f)) = -softplus(f), log σ(f) = -softplus(-f)
    if y == 1 {
        softplus(-f)
    } else {
        softplus(f)
    }
}

/// `∂ bce / ∂f = σ(f) − y`
#[inline]
pub(crate) fn bce_grad(y: u8, f: f64) -> f64 {
    sigmoid(f) - y as f64
}

/// Cross-entropy of the discriminator logit against the fixed label 0.
pub fn adversarial_loss(f_adv: f64) -> f64 {
    bce(0, f_adv)
}

/// Which loss a pair fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Routing {
    Lvc,
    Adversarial,
    /// Soft sampler: a convex mix of both.
    Mixed,
}

/// Loss of one gated pair. Hard gate: the correspondence loss when `z = 0`,
/// the adversarial loss otherwise. Soft gate: `(1−w) L_lvc + w L_adv`.
pub fn pair_loss(decision: &GateDecision, sampler: SamplerKind, y: u8, f_lvc: f64) -> Result<(f64, Routing)> {
    let lvc = bce_loss(y, f_lvc)?;
    let adv = adversarial_loss(decision.f_adv);
    Ok(match sampler {
        SamplerKind::GumbelHard if decision.z == 0 => (lvc, Routing::Lvc),
        SamplerKind::GumbelHard => (adv, Routing::Adversarial),
        SamplerKind::SoftmaxSoft => {
            let w = decision.soft_weight;
            ((1.0 - w) * lvc + w * adv, Routing::Mixed)
        }
    })
}

/// Hinge terms of one anchor row of a similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TripletTerm {
    pub loss: f64,
    /// Hardest other video for sentence `i`, if its hinge is active.
    pub video_neg: Option<usize>,
    /// Hardest other sentence for video `i`, if its hinge is active.
    pub sentence_neg: Option<usize>,
}

/// `sim` is row-major `n × n` with `sim[i][j] = s_i · v_j`.
pub(crate) fn triplet_term(sim: &[f64], n: usize, i: usize, margin: f64) -> TripletTerm {
    let pos = sim[i * n + i];
    let argmax = |get: &dyn Fn(usize) -> f64| {
        (0..n)
            .filter(|&j| j != i)
            .fold(None::<(usize, f64)>, |best, j| match best {
                Some((_, b)) if b >= get(j) => best,
                _ => Some((j, get(j))),
            })
            .expect("n >= 2")
    };
    let (jv, hv) = argmax(&|j| sim[i * n + j]);
    let (js, hs) = argmax(&|j| sim[j * n + i]);
    let a = margin - pos + hv;
    let b = margin - pos + hs;
    TripletTerm {
        loss: a.max(0.0) + b.max(0.0),
        video_neg: (a > 0.0).then_some(jv),
        sentence_neg: (b > 0.0).then_some(js),
    }
}

/// Bidirectional hardest-negative hinge loss averaged over anchors.
/// `sim` holds the rows of a square similarity matrix with positives on the
/// diagonal.
pub fn triplet_batch_loss(sim: &[Vec<f64>], margin: f64) -> Result<f64> {
    let n = sim.len();
    if n < 2 {
        return Err(WalError::invalid("batch", "triplet loss needs at least 2 pairs"));
    }
    if let Some(r) = sim.iter().find(|r| r.len() != n) {
        return Err(WalError::dim("similarity matrix row", n, r.len()));
    }
    let flat = sim.concat();
    Ok((0..n).map(|i| triplet_term(&flat, n, i, margin).loss).sum::<f64>() / n as f64)
}
