//! Batch forward pass and its exact reverse-mode gradient.
//!
//! The gate is handled with the straight-through rule: the forward value
//! routes each pair by the hard sample `z`, the backward pass differentiates
//! `(z + w − sg(w)) (L_adv − L_lvc)` where `w` is the relaxed weight. During
//! the freeze phase the gate logit is treated as a constant: the
//! discriminator gets no gradient and the adversarial loss updates nothing.

use crate::corpus::Tag;
use crate::error::{Result, WalError};
use crate::linalg::{axpy, dot, sigmoid};
use crate::model::{
    attend, discriminator_logit, embed, gate_from_noise, max_pool_similarity, AttentionKind, AttentionParams,
    ChannelParams, Embedding, GateDecision, GateNoise, InputMode, ModelParams, SamplerKind,
};

use super::loss::{bce, bce_grad, triplet_term};
use super::{LossKind, Phase};

/// One batch entry with its frames already sampled and its gate noise drawn.
#[derive(Debug, Clone)]
pub struct PairSample<'a> {
    pub id: &'a str,
    pub sentence: &'a [f64],
    pub frames: Vec<&'a [f64]>,
    pub label: u8,
    pub tag: Tag,
    pub noise: GateNoise,
}

/// The loss-shaping knobs of a training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub loss_kind: LossKind,
    pub sampler: SamplerKind,
    pub tau: f64,
    pub triplet_margin: f64,
    /// When false every pair is routed to the correspondence loss.
    pub gate_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    pub decision: GateDecision,
    pub loss_lvc: f64,
    pub loss_adv: f64,
    pub label: u8,
    pub tag: Tag,
}

#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Mean gated loss over the scored pairs.
    pub loss: f64,
    pub grads: ModelParams,
    /// One entry per scored pair: every entry for `bce`, positives only for `triplet`.
    pub pairs: Vec<PairOutcome>,
}

struct Scored {
    alpha: Vec<f64>,
    v: Vec<f64>,
    sim: f64,
}

/// Loss and exact gradient of the batch objective with respect to every
/// parameter tensor.
pub fn compute_gradients(
    params: &ModelParams,
    batch: &[PairSample<'_>],
    objective: &Objective,
    phase: Phase,
) -> Result<BatchGradient> {
    let active: Vec<&PairSample> = match objective.loss_kind {
        LossKind::Bce => batch.iter().collect(),
        LossKind::Triplet => batch.iter().filter(|p| p.label == 1).collect(),
    };
    let n = active.len();
    if n == 0 {
        return Err(WalError::invalid("batch", "no pairs to score"));
    }
    if objective.loss_kind == LossKind::Triplet && n < 2 {
        return Err(WalError::invalid(
            "batch",
            "triplet loss needs at least 2 positive pairs",
        ));
    }
    if objective.tau.is_nan() || objective.tau <= 0.0 {
        return Err(WalError::invalid("tau", "must be positive"));
    }

    let sents: Vec<Embedding> = active
        .iter()
        .map(|p| embed(&params.language, p.sentence))
        .collect::<Result<_>>()?;
    let clips: Vec<Vec<Embedding>> = active
        .iter()
        .map(|p| {
            p.frames
                .iter()
                .map(|f| embed(&params.vision, f))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let frame_outs: Vec<Vec<&[f64]>> = clips
        .iter()
        .map(|c| c.iter().map(|e| e.out.as_slice()).collect())
        .collect();

    let triplet = objective.loss_kind == LossKind::Triplet;
    let score_pair = |a: usize, b: usize| -> Result<Scored> {
        let s = &sents[a].out;
        let (alpha, v) = attend(&params.attention, s, &frame_outs[b])?;
        Ok(Scored {
            sim: dot(s, &v),
            alpha,
            v,
        })
    };
    let scored: Vec<Scored> = if triplet {
        (0..n * n).map(|k| score_pair(k / n, k % n)).collect::<Result<_>>()?
    } else {
        (0..n).map(|i| score_pair(i, i)).collect::<Result<_>>()?
    };
    let diag = |i: usize| if triplet { i * n + i } else { i };
    let sim_matrix: Vec<f64> = if triplet {
        scored.iter().map(|s| s.sim).collect()
    } else {
        Vec::new()
    };

    let mut grads = params.zeros_like();
    let mut g_sim = vec![0.0; scored.len()];
    let mut g_sent: Vec<Vec<f64>> = vec![vec![0.0; params.d_emb()]; n];
    let scale = 1.0 / n as f64;
    let frozen = phase == Phase::Freeze;

    let mut pairs = Vec::with_capacity(n);
    let mut total = 0.0;
    for (i, p) in active.iter().enumerate() {
        let s = &sents[i].out;
        let p_lvc = scored[diag(i)].sim;
        let (p_adv, best_row) = max_pool_similarity(&params.disc.bvf, s);
        let f_adv = discriminator_logit(&params.disc, p_lvc, p_adv);

        let (lvc, trip) = if triplet {
            let t = triplet_term(&sim_matrix, n, i, objective.triplet_margin);
            (t.loss, Some(t))
        } else {
            (bce(p.label, params.a_lvc * p_lvc + params.b_lvc), None)
        };
        let adv = bce(0, f_adv);

        let (z, w) = if objective.gate_enabled {
            let g = gate_from_noise(f_adv, objective.tau, objective.sampler, p.noise);
            (g.z, g.soft_weight)
        } else {
            (0, 0.0)
        };
        let soft = objective.gate_enabled && objective.sampler == SamplerKind::SoftmaxSoft;
        let (value, c_lvc, c_adv, g_w) = if !objective.gate_enabled {
            (lvc, 1.0, 0.0, 0.0)
        } else if soft {
            let value = (1.0 - w) * lvc + w * adv;
            if frozen {
                (value, 1.0 - w, 0.0, 0.0)
            } else {
                (value, 1.0 - w, w, adv - lvc)
            }
        } else {
            let zf = z as f64;
            let value = if z == 1 { adv } else { lvc };
            if frozen {
                (value, 1.0 - zf, 0.0, 0.0)
            } else {
                (value, 1.0 - zf, zf, adv - lvc)
            }
        };
        if !value.is_finite() {
            return Err(WalError::NonFinite {
                pair_id: p.id.to_string(),
                epoch: 0,
                batch: 0,
            });
        }
        total += value;
        pairs.push(PairOutcome {
            decision: GateDecision {
                p_lvc,
                p_adv,
                f_adv,
                z,
                soft_weight: w,
            },
            loss_lvc: lvc,
            loss_adv: adv,
            label: p.label,
            tag: p.tag,
        });

        // correspondence branch
        let g_lvc = c_lvc * scale;
        match trip {
            None => {
                let f_lvc = params.a_lvc * p_lvc + params.b_lvc;
                let g_f = g_lvc * bce_grad(p.label, f_lvc);
                grads.a_lvc += g_f * p_lvc;
                grads.b_lvc += g_f;
                g_sim[diag(i)] += g_f * params.a_lvc;
            }
            Some(t) => {
                if let Some(j) = t.video_neg {
                    g_sim[diag(i)] -= g_lvc;
                    g_sim[i * n + j] += g_lvc;
                }
                if let Some(k) = t.sentence_neg {
                    g_sim[diag(i)] -= g_lvc;
                    g_sim[k * n + i] += g_lvc;
                }
            }
        }

        // discriminator branch: adversarial loss plus the straight-through term
        let g_f_adv = scale * (c_adv * sigmoid(f_adv) + g_w * w * (1.0 - w) / objective.tau);
        if g_f_adv != 0.0 {
            let d = &params.disc;
            let (g_p_adv, g_p_lvc) = match d.input_mode {
                InputMode::Residual => {
                    grads.disc.a_adv[0] += g_f_adv * (p_adv - p_lvc);
                    (g_f_adv * d.a_adv[0], -g_f_adv * d.a_adv[0])
                }
                InputMode::Concat => {
                    grads.disc.a_adv[0] += g_f_adv * p_adv;
                    grads.disc.a_adv[1] += g_f_adv * p_lvc;
                    (g_f_adv * d.a_adv[0], g_f_adv * d.a_adv[1])
                }
                InputMode::AdvOnly => {
                    grads.disc.a_adv[0] += g_f_adv * p_adv;
                    (g_f_adv * d.a_adv[0], 0.0)
                }
            };
            grads.disc.b_adv += g_f_adv;
            g_sim[diag(i)] += g_p_lvc;
            axpy(g_p_adv, d.bvf.row(best_row), &mut g_sent[i]);
            axpy(g_p_adv, s, grads.disc.bvf.row_mut(best_row));
        }
    }

    // similarities back to sentences, frames and attention parameters
    let mut g_frames: Vec<Vec<Vec<f64>>> = clips.iter().map(|c| vec![vec![0.0; params.d_emb()]; c.len()]).collect();
    for (k, sc) in scored.iter().enumerate() {
        let g = g_sim[k];
        if g == 0.0 {
            continue;
        }
        let (a, b) = if triplet { (k / n, k % n) } else { (k, k) };
        let s = &sents[a].out;
        axpy(g, &sc.v, &mut g_sent[a]);
        let g_v: Vec<f64> = s.iter().map(|x| g * x).collect();
        attend_backward(
            &params.attention,
            s,
            &frame_outs[b],
            &sc.alpha,
            &g_v,
            &mut g_sent[a],
            &mut g_frames[b],
            &mut grads.attention,
        );
    }

    for (i, p) in active.iter().enumerate() {
        embed_backward(&mut grads.language, p.sentence, &sents[i], &g_sent[i]);
        for ((x, e), g) in p.frames.iter().zip(&clips[i]).zip(&g_frames[i]) {
            embed_backward(&mut grads.vision, x, e, g);
        }
    }

    Ok(BatchGradient {
        loss: total * scale,
        grads,
        pairs,
    })
}

/// Accumulates the gradient of `normalize(relu(W x + b))` given the
/// upstream gradient on its output. A dead (all-zero) output passes nothing.
fn embed_backward(grad: &mut ChannelParams, x: &[f64], e: &Embedding, g_out: &[f64]) {
    if e.norm == 0.0 {
        return;
    }
    let proj = dot(&e.out, g_out);
    let g_pre: Vec<f64> = e
        .pre
        .iter()
        .zip(g_out.iter().zip(&e.out))
        .map(|(&pre, (&g, &o))| if pre > 0.0 { (g - o * proj) / e.norm } else { 0.0 })
        .collect();
    grad.weight.add_outer(1.0, &g_pre, x);
    axpy(1.0, &g_pre, &mut grad.bias);
}

/// Backward of `v = Σ softmax(e)_i h_i` for the configured score function.
#[allow(clippy::too_many_arguments)]
fn attend_backward(
    attn: &AttentionParams,
    s: &[f64],
    frames: &[&[f64]],
    alpha: &[f64],
    g_v: &[f64],
    g_s: &mut [f64],
    g_frames: &mut [Vec<f64>],
    g_attn: &mut AttentionParams,
) {
    let g_alpha: Vec<f64> = frames.iter().map(|h| dot(g_v, h)).collect();
    for (gh, &a) in g_frames.iter_mut().zip(alpha) {
        axpy(a, g_v, gh);
    }
    if attn.kind == AttentionKind::Mean {
        return;
    }
    let mean: f64 = alpha.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
    let g_e: Vec<f64> = alpha.iter().zip(&g_alpha).map(|(a, g)| a * (g - mean)).collect();

    match attn.kind {
        AttentionKind::Mean => {}
        AttentionKind::Dot => {
            for ((h, gh), &ge) in frames.iter().zip(g_frames.iter_mut()).zip(&g_e) {
                axpy(ge, h, g_s);
                axpy(ge, s, gh);
            }
        }
        AttentionKind::Multiplicative => {
            let wt_s = attn.bilinear.matvec_t(s);
            for ((h, gh), &ge) in frames.iter().zip(g_frames.iter_mut()).zip(&g_e) {
                if ge == 0.0 {
                    continue;
                }
                axpy(ge, &attn.bilinear.matvec(h), g_s);
                axpy(ge, &wt_s, gh);
                g_attn.bilinear.add_outer(ge, s, h);
            }
        }
        AttentionKind::Additive => {
            let us = attn.w1.matvec_t(s);
            let mut g_us = vec![0.0; us.len()];
            for ((h, gh), &ge) in frames.iter().zip(g_frames.iter_mut()).zip(&g_e) {
                let uh = attn.w2.matvec_t(h);
                let t: Vec<f64> = us.iter().zip(&uh).map(|(a, b)| (a + b).tanh()).collect();
                axpy(ge, &t, &mut g_attn.w);
                let g_u: Vec<f64> = t
                    .iter()
                    .zip(&attn.w)
                    .map(|(ti, wi)| ge * wi * (1.0 - ti * ti))
                    .collect();
                axpy(1.0, &g_u, &mut g_us);
                axpy(1.0, &attn.w2.matvec(&g_u), gh);
                g_attn.w2.add_outer(1.0, h, &g_u);
            }
            axpy(1.0, &attn.w1.matvec(&g_us), g_s);
            g_attn.w1.add_outer(1.0, s, &g_us);
        }
    }
}
