use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grad::{compute_gradients, PairOutcome, PairSample};
use super::sgd::{sgd_step, OptimizerState, SgdHyper, UpdateScope};
use super::{Phase, TrainConfig};
use crate::corpus::{epoch_batches, sample_frame_indices, ClipRecord, PairBatch, Tag};
use crate::error::{Result, WalError};
use crate::model::{
    attend, embed, embed_frames, init_bvf, sample_gate_noise, GateNoise, ModelParams, ModelShape, SamplerKind,
};

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub lr: f64,
    /// Mean correspondence loss over every scored pair, whatever its routing.
    pub loss_lvc: f64,
    /// Mean adversarial loss over every scored pair.
    pub loss_adv: f64,
    /// Fraction of scored pairs routed to the correspondence loss. For the
    /// soft sampler this is the mean mass `1 − w`.
    pub z0_fraction: f64,
    /// Gate-out rate among positive pairs of each tag, indexed by
    /// [`Tag::index`]; `None` when the epoch saw no positive of that tag.
    pub z1_rate_by_tag: [Option<f64>; 3],
}

impl EpochMetrics {
    pub fn z1_rate(&self, tag: Tag) -> Option<f64> {
        self.z1_rate_by_tag[tag.index()]
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochMetrics>,
}

pub fn metrics_csv_header() -> &'static str {
    "epoch,phase,lr,loss_lvc,loss_adv,z0_fraction,z1_rate_clean,z1_rate_loose,z1_rate_noise"
}

pub fn metrics_csv_row(m: &EpochMetrics) -> String {
    let rate = |r: Option<f64>| r.map_or(String::new(), |x| x.to_string());
    format!(
        "{},{},{},{},{},{},{},{},{}",
        m.epoch,
        m.phase,
        m.lr,
        m.loss_lvc,
        m.loss_adv,
        m.z0_fraction,
        rate(m.z1_rate_by_tag[0]),
        rate(m.z1_rate_by_tag[1]),
        rate(m.z1_rate_by_tag[2]),
    )
}

/// Fresh parameters for `corpus` with BVF rows initialised from the
/// attention-pooled video features of every training clip.
pub fn initial_params<R: Rng + ?Sized>(cfg: &TrainConfig, corpus: &[ClipRecord], rng: &mut R) -> Result<ModelParams> {
    let d_in = corpus
        .first()
        .ok_or_else(|| WalError::invalid("corpus", "training corpus is empty"))?
        .dim();
    let shape = ModelShape {
        d_in,
        d_emb: cfg.d_emb,
        d_att: cfg.d_att_resolved(),
        attention: cfg.attention_kind,
        input_mode: cfg.input_mode,
        bvf_count: cfg.bvf_count,
    };
    let mut params = ModelParams::init(&shape, rng)?;
    let videos = corpus
        .iter()
        .map(|r| {
            let s = embed(&params.language, &r.sentence)?.out;
            let h = embed_frames(&params, &r.frames)?;
            Ok(attend(&params.attention, &s, &h)?.1)
        })
        .collect::<Result<Vec<_>>>()?;
    params.disc.bvf = init_bvf(&videos, cfg.bvf_count, rng)?;
    Ok(params)
}

/// Samples frames and gate noise for every entry of `batch`.
pub fn prepare_batch<'a, R: Rng + ?Sized>(
    corpus: &'a [ClipRecord],
    batch: &PairBatch,
    n_f: usize,
    sampler: SamplerKind,
    rng: &mut R,
) -> Result<Vec<PairSample<'a>>> {
    batch
        .entries
        .iter()
        .map(|e| {
            let clip = &corpus[e.clip];
            let frames = sample_frame_indices(clip.frames.len(), n_f, rng)?
                .into_iter()
                .map(|i| clip.frames[i].as_slice())
                .collect();
            let noise = match sampler {
                SamplerKind::GumbelHard => sample_gate_noise(rng),
                SamplerKind::SoftmaxSoft => GateNoise { g0: 0.0, g1: 0.0 },
            };
            Ok(PairSample {
                id: &clip.id,
                sentence: &corpus[e.sentence].sentence,
                frames,
                label: e.label,
                tag: clip.tag,
                noise,
            })
        })
        .collect()
}

#[derive(Default)]
struct Tally {
    pairs: usize,
    loss_lvc: f64,
    loss_adv: f64,
    z0_mass: f64,
    tag_seen: [usize; 3],
    tag_out: [f64; 3],
}

impl Tally {
    fn add(&mut self, o: &PairOutcome, cfg: &TrainConfig) {
        let out_mass = if !cfg.gate_enabled {
            0.0
        } else if cfg.sampler_kind == SamplerKind::SoftmaxSoft {
            o.decision.soft_weight
        } else {
            o.decision.z as f64
        };
        self.pairs += 1;
        self.loss_lvc += o.loss_lvc;
        self.loss_adv += o.loss_adv;
        self.z0_mass += 1.0 - out_mass;
        if o.label == 1 {
            self.tag_seen[o.tag.index()] += 1;
            self.tag_out[o.tag.index()] += out_mass;
        }
    }

    fn finish(&self, epoch: usize, phase: Phase, lr: f64) -> EpochMetrics {
        let n = self.pairs.max(1) as f64;
        let rates = std::array::from_fn(|t| (self.tag_seen[t] > 0).then(|| self.tag_out[t] / self.tag_seen[t] as f64));
        EpochMetrics {
            epoch,
            phase,
            lr,
            loss_lvc: self.loss_lvc / n,
            loss_adv: self.loss_adv / n,
            z0_fraction: self.z0_mass / n,
            z1_rate_by_tag: rates,
        }
    }
}

pub fn train(cfg: &TrainConfig, corpus: &[ClipRecord]) -> Result<TrainOutcome> {
    train_with_callback(cfg, corpus, |_, _| Ok(()))
}

/// Runs the freeze phase then the joint phase. `on_epoch` sees every
/// epoch's metrics and the parameters at the end of that epoch; an error
/// from it aborts training.
pub fn train_with_callback(
    cfg: &TrainConfig,
    corpus: &[ClipRecord],
    mut on_epoch: impl FnMut(&EpochMetrics, &ModelParams) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = initial_params(cfg, corpus, &mut rng)?;
    let mut state = OptimizerState::new(&params);
    let objective = cfg.objective();
    let mut history = Vec::with_capacity(cfg.total_epochs());

    for epoch in 0..cfg.total_epochs() {
        let phase = cfg.phase_of(epoch);
        let lr = cfg.lr_for(phase);
        let hyper = SgdHyper {
            lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
        };
        let scope = match phase {
            Phase::Freeze => UpdateScope::SkipDiscriminator,
            Phase::Joint => UpdateScope::All,
        };
        let mut tally = Tally::default();
        for (b, batch) in epoch_batches(corpus.len(), cfg.batch_size, &mut rng)?
            .iter()
            .enumerate()
        {
            let samples = prepare_batch(corpus, batch, cfg.n_f, cfg.sampler_kind, &mut rng)?;
            let out = compute_gradients(&params, &samples, &objective, phase).map_err(|e| match e {
                WalError::NonFinite { pair_id, .. } => WalError::NonFinite {
                    pair_id,
                    epoch,
                    batch: b,
                },
                other => other,
            })?;
            for o in &out.pairs {
                tally.add(o, cfg);
            }
            sgd_step(&mut params, &out.grads, &mut state, hyper, scope)?;
            if !params.is_finite() {
                return Err(WalError::NonFinite {
                    pair_id: format!("parameters after batch {b}"),
                    epoch,
                    batch: b,
                });
            }
        }
        let m = tally.finish(epoch, phase, lr);
        on_epoch(&m, &params)?;
        history.push(m);
    }
    Ok(TrainOutcome { params, history })
}
