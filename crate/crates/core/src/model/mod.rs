//! Forward pass of the network: two embedding channels, sentence-guided
//! frame attention, and the discriminator that gates each pair.
//!
//! Embeddings are unit vectors (or exactly zero when the ReLU kills every
//! unit), so `p_lvc = s·v` and `p_adv = max_b s·v_b` stay bounded and the
//! scalar classifiers on top of them are plain affine maps.

mod checkpoint;
mod gate;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gate::{gate_from_noise, sample_gate, sample_gate_noise, GateDecision, GateNoise, GateSample, SamplerKind};
pub(crate) use params::text_enum;
pub use params::{
    AttentionKind, AttentionParams, ChannelParams, DiscriminatorParams, InputMode, ModelParams, ModelShape,
    ADV_INIT_SLOPE, DISCRIMINATOR_TENSORS, N_TENSORS,
};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Result, WalError};
use crate::linalg::{axpy, dot, l2_normalize, norm, softmax, Matrix};

/// Embedding output plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// `W x + b` before the ReLU.
    pub pre: Vec<f64>,
    /// Unit vector, or zero when every unit is inactive.
    pub out: Vec<f64>,
    /// Norm of `relu(pre)`.
    pub norm: f64,
}

pub fn embed(channel: &ChannelParams, x: &[f64]) -> Result<Embedding> {
    if x.len() != channel.d_in() {
        return Err(WalError::dim("embedding input", channel.d_in(), x.len()));
    }
    let mut pre = channel.weight.matvec(x);
    for (p, b) in pre.iter_mut().zip(&channel.bias) {
        *p += b;
    }
    let relu: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
    let n = norm(&relu);
    let out = if n > 0.0 {
        relu.iter().map(|r| r / n).collect()
    } else {
        relu
    };
    Ok(Embedding { pre, out, norm: n })
}

pub fn embed_sentence(params: &ModelParams, sentence: &[f64]) -> Result<Vec<f64>> {
    Ok(embed(&params.language, sentence)?.out)
}

pub fn embed_frames<F: AsRef<[f64]>>(params: &ModelParams, frames: &[F]) -> Result<Vec<Vec<f64>>> {
    frames
        .iter()
        .map(|f| embed(&params.vision, f.as_ref()).map(|e| e.out))
        .collect()
}

/// Unnormalised attention scores `e_i` of sentence `s` over frames `h`.
pub fn attention_scores<H: AsRef<[f64]>>(attn: &AttentionParams, s: &[f64], frames: &[H]) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Err(WalError::invalid("frames", "attention over an empty frame list"));
    }
    for h in frames {
        if h.as_ref().len() != s.len() {
            return Err(WalError::dim("attention frame", s.len(), h.as_ref().len()));
        }
    }
    let scores = match attn.kind {
        AttentionKind::Mean => vec![0.0; frames.len()],
        AttentionKind::Dot => frames.iter().map(|h| dot(s, h.as_ref())).collect(),
        AttentionKind::Multiplicative => {
            // sᵀ W h = (Wᵀ s) · h
            let ws = attn.bilinear.matvec_t(s);
            frames.iter().map(|h| dot(&ws, h.as_ref())).collect()
        }
        AttentionKind::Additive => {
            let us = attn.w1.matvec_t(s);
            frames
                .iter()
                .map(|h| {
                    let uh = attn.w2.matvec_t(h.as_ref());
                    us.iter()
                        .zip(&uh)
                        .zip(&attn.w)
                        .map(|((a, b), w)| w * (a + b).tanh())
                        .sum()
                })
                .collect()
        }
    };
    Ok(scores)
}

/// Softmax of [`attention_scores`]: nonnegative, sums to one.
pub fn attention_weights<H: AsRef<[f64]>>(attn: &AttentionParams, s: &[f64], frames: &[H]) -> Result<Vec<f64>> {
    Ok(softmax(&attention_scores(attn, s, frames)?))
}

/// `v = Σ α_i h_i`
pub fn pool_video<H: AsRef<[f64]>>(alpha: &[f64], frames: &[H]) -> Result<Vec<f64>> {
    if alpha.len() != frames.len() {
        return Err(WalError::dim("attention weights", frames.len(), alpha.len()));
    }
    let d = frames.first().map_or(0, |h| h.as_ref().len());
    let mut v = vec![0.0; d];
    for (a, h) in alpha.iter().zip(frames) {
        axpy(*a, h.as_ref(), &mut v);
    }
    Ok(v)
}

/// Attention-pooled video feature for sentence `s`, with the weights used.
pub fn attend<H: AsRef<[f64]>>(attn: &AttentionParams, s: &[f64], frames: &[H]) -> Result<(Vec<f64>, Vec<f64>)> {
    let alpha = attention_weights(attn, s, frames)?;
    let v = pool_video(&alpha, frames)?;
    Ok((alpha, v))
}

/// Retrieval score `s · v(s, H)` of an embedded sentence against embedded frames.
pub fn pair_score<H: AsRef<[f64]>>(params: &ModelParams, s: &[f64], frames: &[H]) -> Result<f64> {
    let (_, v) = attend(&params.attention, s, frames)?;
    Ok(dot(s, &v))
}

/// Background features from a sample of video features: the normalised
/// sample is split into `b` random groups and each row is the normalised
/// group mean.
pub fn init_bvf<R: Rng + ?Sized>(video_features: &[Vec<f64>], b: usize, rng: &mut R) -> Result<Matrix> {
    if b == 0 {
        return Err(WalError::invalid("bvf_count", "must be at least 1"));
    }
    if video_features.len() < b {
        return Err(WalError::invalid(
            "bvf_count",
            format!("sample of {} video features is smaller than {b}", video_features.len()),
        ));
    }
    let d = video_features[0].len();
    let mut order: Vec<usize> = (0..video_features.len()).collect();
    order.shuffle(rng);
    let mut bvf = Matrix::zeros(b, d);
    // round-robin over a shuffled order gives b non-empty random groups
    for (pos, &i) in order.iter().enumerate() {
        let v = &video_features[i];
        if v.len() != d {
            return Err(WalError::dim("bvf sample", d, v.len()));
        }
        axpy(1.0, &l2_normalize(v), bvf.row_mut(pos % b));
    }
    for g in 0..b {
        let row = l2_normalize(bvf.row(g));
        bvf.row_mut(g).copy_from_slice(&row);
    }
    Ok(bvf)
}

/// `p_adv = max_b s·v_b`, with the first maximising row.
pub fn max_pool_similarity(bvf: &Matrix, s: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..bvf.rows {
        let sim = dot(bvf.row(i), s);
        if sim > best.0 {
            best = (sim, i);
        }
    }
    best
}

pub fn discriminator_logit(disc: &DiscriminatorParams, p_lvc: f64, p_adv: f64) -> f64 {
    match disc.input_mode {
        InputMode::Residual => disc.a_adv[0] * (p_adv - p_lvc) + disc.b_adv,
        InputMode::Concat => disc.a_adv[0] * p_adv + disc.a_adv[1] * p_lvc + disc.b_adv,
        InputMode::AdvOnly => disc.a_adv[0] * p_adv + disc.b_adv,
    }
}

pub fn lvc_logit(params: &ModelParams, s: &[f64], v: &[f64]) -> Result<f64> {
    if s.len() != v.len() {
        return Err(WalError::dim("lvc_logit", s.len(), v.len()));
    }
    Ok(params.a_lvc * dot(s, v) + params.b_lvc)
}
