#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use wal_core::corpus::Tag;
use wal_core::linalg::dot;
use wal_core::model::{
    attend, discriminator_logit, embed_frames, embed_sentence, gate_from_noise, lvc_logit, max_pool_similarity,
    sample_gate_noise, AttentionKind, GateNoise, InputMode, ModelParams, ModelShape, SamplerKind,
};
use wal_core::training::{adversarial_loss, bce_loss, compute_gradients, LossKind, Objective, PairSample, Phase};

#[derive(Debug, Clone, Copy)]
pub struct OracleCase {
    pub attention: AttentionKind,
    pub input_mode: InputMode,
    pub loss_kind: LossKind,
    pub sampler: SamplerKind,
    pub phase: Phase,
    pub gate_enabled: bool,
    pub seed: u64,
}

/// Every attention kind, input mode, loss, sampler and phase, plus gate-off
/// and mean-pooling cases.
pub fn oracle_cases() -> Vec<OracleCase> {
    let mut cases = Vec::new();
    let mut seed = 0;
    let mut push = |attention, input_mode, loss_kind, sampler, phase, gate_enabled| {
        seed += 1;
        cases.push(OracleCase {
            attention,
            input_mode,
            loss_kind,
            sampler,
            phase,
            gate_enabled,
            seed,
        });
    };
    for attention in [
        AttentionKind::Dot,
        AttentionKind::Multiplicative,
        AttentionKind::Additive,
    ] {
        for input_mode in [InputMode::Residual, InputMode::Concat, InputMode::AdvOnly] {
            for loss_kind in [LossKind::Bce, LossKind::Triplet] {
                for sampler in [SamplerKind::GumbelHard, SamplerKind::SoftmaxSoft] {
                    for phase in [Phase::Freeze, Phase::Joint] {
                        push(attention, input_mode, loss_kind, sampler, phase, true);
                    }
                }
            }
        }
    }
    for loss_kind in [LossKind::Bce, LossKind::Triplet] {
        push(
            AttentionKind::Mean,
            InputMode::Residual,
            loss_kind,
            SamplerKind::GumbelHard,
            Phase::Joint,
            true,
        );
        push(
            AttentionKind::Additive,
            InputMode::Concat,
            loss_kind,
            SamplerKind::GumbelHard,
            Phase::Joint,
            false,
        );
    }
    cases
}

pub struct OracleData {
    pub params: ModelParams,
    pub sentences: Vec<Vec<f64>>,
    pub frames: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<u8>,
    pub noise: Vec<GateNoise>,
}

const D: usize = 4;
const BATCH: usize = 4;

fn normal_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn oracle_data(case: &OracleCase) -> OracleData {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let shape = ModelShape {
        d_in: D,
        d_emb: D,
        d_att: 3,
        attention: case.attention,
        input_mode: case.input_mode,
        bvf_count: 3,
    };
    let mut params = ModelParams::init(&shape, &mut rng).unwrap();
    // move every scalar and bias away from its special initial value
    for t in params.tensors_mut() {
        for x in t.iter_mut() {
            *x += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let sentences = (0..BATCH).map(|_| normal_vec(D, 1.0, &mut rng)).collect();
    let frames = (0..BATCH)
        .map(|_| {
            let n = rng.random_range(2..=3);
            (0..n).map(|_| normal_vec(D, 1.0, &mut rng)).collect()
        })
        .collect();
    let labels = match case.loss_kind {
        LossKind::Bce => vec![1, 0, 1, 0],
        LossKind::Triplet => vec![1, 1, 0, 1],
    };
    let noise = (0..BATCH).map(|_| sample_gate_noise(&mut rng)).collect();
    OracleData {
        params,
        sentences,
        frames,
        labels,
        noise,
    }
}

fn objective(case: &OracleCase) -> Objective {
    Objective {
        loss_kind: case.loss_kind,
        sampler: case.sampler,
        tau: 0.7,
        triplet_margin: 0.2,
        gate_enabled: case.gate_enabled,
    }
}

/// Hard samples and relaxed weights at the unperturbed parameters.
struct Anchor {
    z: Vec<f64>,
    w: Vec<f64>,
}

/// The surrogate whose gradient the straight-through rule defines, written
/// directly from the forward functions.
fn surrogate(params: &ModelParams, data: &OracleData, case: &OracleCase, anchor: Option<&Anchor>) -> (f64, Anchor) {
    let obj = objective(case);
    let active: Vec<usize> = match case.loss_kind {
        LossKind::Bce => (0..BATCH).collect(),
        LossKind::Triplet => (0..BATCH).filter(|&i| data.labels[i] == 1).collect(),
    };
    let n = active.len();
    let s: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| embed_sentence(params, &data.sentences[i]).unwrap())
        .collect();
    let h: Vec<Vec<Vec<f64>>> = active
        .iter()
        .map(|&i| embed_frames(params, &data.frames[i]).unwrap())
        .collect();
    let sim = |a: usize, b: usize| {
        let (_, v) = attend(&params.attention, &s[a], &h[b]).unwrap();
        dot(&s[a], &v)
    };
    let mut z_now = Vec::new();
    let mut w_now = Vec::new();
    let mut total = 0.0;
    for (k, &i) in active.iter().enumerate() {
        let (_, v) = attend(&params.attention, &s[k], &h[k]).unwrap();
        let p_lvc = dot(&s[k], &v);
        let l_lvc = match case.loss_kind {
            LossKind::Bce => bce_loss(data.labels[i], lvc_logit(params, &s[k], &v).unwrap()).unwrap(),
            LossKind::Triplet => {
                let m = 0.2;
                let pos = sim(k, k);
                let hardest_video = (0..n).filter(|&j| j != k).map(|j| sim(k, j)).fold(f64::MIN, f64::max);
                let hardest_sentence = (0..n).filter(|&j| j != k).map(|j| sim(j, k)).fold(f64::MIN, f64::max);
                (m - pos + hardest_video).max(0.0) + (m - pos + hardest_sentence).max(0.0)
            }
        };
        let (p_adv, _) = max_pool_similarity(&params.disc.bvf, &s[k]);
        let f_adv = discriminator_logit(&params.disc, p_lvc, p_adv);
        let l_adv = adversarial_loss(f_adv);
        let g = gate_from_noise(f_adv, obj.tau, case.sampler, data.noise[i]);
        let (z, w) = (g.z as f64, g.soft_weight);
        z_now.push(z);
        w_now.push(w);
        let (z0, w0) = anchor.map_or((z, w), |a| (a.z[k], a.w[k]));
        let soft = case.sampler == SamplerKind::SoftmaxSoft;
        total += match (case.gate_enabled, case.phase, soft) {
            (false, _, _) => l_lvc,
            (true, Phase::Freeze, false) => (1.0 - z0) * l_lvc,
            (true, Phase::Freeze, true) => (1.0 - w0) * l_lvc,
            (true, Phase::Joint, false) => l_lvc + (z0 + w - w0) * (l_adv - l_lvc),
            (true, Phase::Joint, true) => (1.0 - w) * l_lvc + w * l_adv,
        };
    }
    (total / n as f64, Anchor { z: z_now, w: w_now })
}

pub struct OracleReport {
    pub coordinates: usize,
    pub failures: Vec<String>,
    pub max_abs_err: f64,
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-7;

pub fn check_case(case: &OracleCase) -> OracleReport {
    let data = oracle_data(case);
    let batch: Vec<PairSample> = (0..BATCH)
        .map(|i| PairSample {
            id: "oracle",
            sentence: &data.sentences[i],
            frames: data.frames[i].iter().map(Vec::as_slice).collect(),
            label: data.labels[i],
            tag: Tag::Clean,
            noise: data.noise[i],
        })
        .collect();
    let analytic = compute_gradients(&data.params, &batch, &objective(case), case.phase).unwrap();
    let (_, anchor) = surrogate(&data.params, &data, case, None);

    let mut report = OracleReport {
        coordinates: 0,
        failures: Vec::new(),
        max_abs_err: 0.0,
    };
    for (t, tensor) in analytic.grads.tensors().iter().enumerate() {
        for (c, &a) in tensor.iter().enumerate() {
            let mut plus = data.params.clone();
            plus.tensors_mut()[t][c] += FD_STEP;
            let mut minus = data.params.clone();
            minus.tensors_mut()[t][c] -= FD_STEP;
            let lp = surrogate(&plus, &data, case, Some(&anchor)).0;
            let lm = surrogate(&minus, &data, case, Some(&anchor)).0;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let err = (a - numeric).abs();
            report.coordinates += 1;
            report.max_abs_err = report.max_abs_err.max(err);
            if err > ABS_TOL && err > REL_TOL * a.abs().max(numeric.abs()) {
                report
                    .failures
                    .push(format!("{case:?} tensor {t}[{c}]: analytic {a} numeric {numeric}"));
            }
        }
    }
    report
}
