//! Losses, gradients, the optimiser, and the two-phase training loop.
//!
//! The batch loss is the mean over scored pairs, so the summed objective is
//! recovered by multiplying the learning rate by the batch size.

mod grad;
mod loss;
mod sgd;
mod trainer;

pub use grad::{compute_gradients, BatchGradient, Objective, PairOutcome, PairSample};
pub use loss::{adversarial_loss, bce_loss, pair_loss, triplet_batch_loss, Routing};
pub use sgd::{sgd_step, OptimizerState, SgdHyper, UpdateScope};
pub use trainer::{
    initial_params, metrics_csv_header, metrics_csv_row, prepare_batch, train, train_with_callback, EpochMetrics,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Result, WalError};
use crate::model::{text_enum, AttentionKind, InputMode, SamplerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Bce,
    Triplet,
}

text_enum!(LossKind {
    Bce => "bce",
    Triplet => "triplet",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Discriminator fixed, adversarial gradients stopped.
    Freeze,
    Joint,
}

text_enum!(Phase {
    Freeze => "freeze",
    Joint => "joint",
});

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub n_f: usize,
    pub freeze_epochs: usize,
    pub joint_epochs: usize,
    /// The learning rate is divided by this once, when the joint phase starts.
    pub lr_drop_factor: f64,
    pub attention_kind: AttentionKind,
    pub sampler_kind: SamplerKind,
    pub input_mode: InputMode,
    pub bvf_count: usize,
    pub tau: f64,
    pub loss_kind: LossKind,
    pub triplet_margin: f64,
    /// Shared embedding size of both channels.
    pub d_emb: usize,
    /// Hidden size of additive attention; 0 means `d_emb`.
    pub d_att: usize,
    /// When false the discriminator is bypassed and every pair has `z = 0`.
    pub gate_enabled: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.001,
            batch_size: 60,
            n_f: 5,
            freeze_epochs: 10,
            joint_epochs: 20,
            lr_drop_factor: 10.0,
            attention_kind: AttentionKind::Dot,
            sampler_kind: SamplerKind::GumbelHard,
            input_mode: InputMode::Residual,
            bvf_count: 4,
            tau: 1.0,
            loss_kind: LossKind::Bce,
            triplet_margin: 0.2,
            d_emb: 128,
            d_att: 0,
            gate_enabled: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("lr_drop_factor", self.lr_drop_factor),
            ("tau", self.tau),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(WalError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("triplet_margin", self.triplet_margin),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(WalError::invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return Err(WalError::invalid("batch_size", "must be even and at least 2"));
        }
        if self.loss_kind == LossKind::Triplet && self.batch_size < 4 {
            return Err(WalError::invalid(
                "batch_size",
                "triplet loss needs at least 2 positives per batch",
            ));
        }
        if self.n_f == 0 {
            return Err(WalError::invalid("n_f", "must be at least 1"));
        }
        if self.freeze_epochs + self.joint_epochs == 0 {
            return Err(WalError::invalid(
                "freeze_epochs/joint_epochs",
                "need at least one epoch",
            ));
        }
        if self.bvf_count == 0 {
            return Err(WalError::invalid("bvf_count", "must be at least 1"));
        }
        if self.d_emb == 0 {
            return Err(WalError::invalid("d_emb", "must be at least 1"));
        }
        Ok(())
    }

    pub fn d_att_resolved(&self) -> usize {
        if self.d_att == 0 {
            self.d_emb
        } else {
            self.d_att
        }
    }

    pub fn objective(&self) -> Objective {
        Objective {
            loss_kind: self.loss_kind,
            sampler: self.sampler_kind,
            tau: self.tau,
            triplet_margin: self.triplet_margin,
            gate_enabled: self.gate_enabled,
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.freeze_epochs + self.joint_epochs
    }

    pub fn phase_of(&self, epoch: usize) -> Phase {
        if epoch < self.freeze_epochs {
            Phase::Freeze
        } else {
            Phase::Joint
        }
    }

    pub fn lr_for(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Freeze => self.lr,
            Phase::Joint => self.lr / self.lr_drop_factor,
        }
    }
}
