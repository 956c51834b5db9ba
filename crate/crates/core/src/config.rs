//! Flat run configuration and the run manifest.
//!
//! A config file is flat TOML; every key is optional and unknown keys are
//! rejected. One `seed` drives both corpus generation and training. A
//! manifest embeds the resolved config under `[config]`, so either file can
//! be passed wherever a config is expected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSpec;
use crate::error::{Result, WalError};
use crate::model::{AttentionKind, InputMode, SamplerKind};
use crate::training::{LossKind, TrainConfig};

pub const MANIFEST_NAME: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    pub n_train: usize,
    pub n_test: usize,
    pub d: usize,
    pub n_concepts: usize,
    pub frac_clean: f64,
    pub frac_loose: f64,
    pub frac_noise: f64,
    pub concepts_per_pair: usize,
    pub feature_noise_sigma: f64,
    pub frame_len_min: usize,
    pub frame_len_max: usize,

    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub n_f: usize,
    pub freeze_epochs: usize,
    pub joint_epochs: usize,
    pub lr_drop_factor: f64,
    pub attention_kind: AttentionKind,
    pub sampler_kind: SamplerKind,
    pub input_mode: InputMode,
    pub bvf_count: usize,
    pub tau: f64,
    pub loss_kind: LossKind,
    pub triplet_margin: f64,
    pub d_emb: usize,
    pub d_att: usize,
    pub gate_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_parts(&CorpusSpec::default(), &TrainConfig::default())
    }
}

impl RunConfig {
    /// Takes the seed from `train`.
    pub fn from_parts(c: &CorpusSpec, t: &TrainConfig) -> Self {
        RunConfig {
            seed: t.seed,
            n_train: c.n_train,
            n_test: c.n_test,
            d: c.d,
            n_concepts: c.n_concepts,
            frac_clean: c.frac_clean,
            frac_loose: c.frac_loose,
            frac_noise: c.frac_noise,
            concepts_per_pair: c.concepts_per_pair,
            feature_noise_sigma: c.feature_noise_sigma,
            frame_len_min: c.frame_len_min,
            frame_len_max: c.frame_len_max,
            lr: t.lr,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            n_f: t.n_f,
            freeze_epochs: t.freeze_epochs,
            joint_epochs: t.joint_epochs,
            lr_drop_factor: t.lr_drop_factor,
            attention_kind: t.attention_kind,
            sampler_kind: t.sampler_kind,
            input_mode: t.input_mode,
            bvf_count: t.bvf_count,
            tau: t.tau,
            loss_kind: t.loss_kind,
            triplet_margin: t.triplet_margin,
            d_emb: t.d_emb,
            d_att: t.d_att,
            gate_enabled: t.gate_enabled,
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            n_train: self.n_train,
            n_test: self.n_test,
            d: self.d,
            n_concepts: self.n_concepts,
            frac_clean: self.frac_clean,
            frac_loose: self.frac_loose,
            frac_noise: self.frac_noise,
            concepts_per_pair: self.concepts_per_pair,
            feature_noise_sigma: self.feature_noise_sigma,
            frame_len_min: self.frame_len_min,
            frame_len_max: self.frame_len_max,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            n_f: self.n_f,
            freeze_epochs: self.freeze_epochs,
            joint_epochs: self.joint_epochs,
            lr_drop_factor: self.lr_drop_factor,
            attention_kind: self.attention_kind,
            sampler_kind: self.sampler_kind,
            input_mode: self.input_mode,
            bvf_count: self.bvf_count,
            tau: self.tau,
            loss_kind: self.loss_kind,
            triplet_margin: self.triplet_margin,
            d_emb: self.d_emb,
            d_att: self.d_att,
            gate_enabled: self.gate_enabled,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.corpus_spec().validate()?;
        self.train_config().validate()
    }

    /// Parses either a flat config or a manifest.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| WalError::invalid("config", e.message()))?;
        if table.contains_key("config") {
            let m: RunManifest = table
                .try_into()
                .map_err(|e: toml::de::Error| WalError::invalid("manifest", e.message()))?;
            return Ok(m.config);
        }
        table
            .try_into()
            .map_err(|e: toml::de::Error| WalError::invalid("config", e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WalError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            WalError::Invalid { field, reason } => WalError::invalid(format!("{field} {}", path.display()), reason),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    /// Sets one key from its textual form, with the same rules as the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut table = toml::Table::try_from(&*self).expect("flat config always serializes");
        let Some(old) = table.get(key) else {
            return Err(WalError::invalid(key, "unknown config key"));
        };
        let parsed = match old {
            toml::Value::String(_) => toml::Value::String(value.to_owned()),
            _ => {
                let doc: toml::Table = format!("v = {value}")
                    .parse()
                    .map_err(|_| WalError::invalid(key, format!("cannot parse {value:?}")))?;
                doc["v"].clone()
            }
        };
        table.insert(key.to_owned(), parsed);
        *self = table
            .try_into()
            .map_err(|e: toml::de::Error| WalError::invalid(key, e.message()))?;
        Ok(())
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Artifact role to path, relative to the run directory where possible.
    #[serde(default)]
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            config: config.clone(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn with_artifact(mut self, role: &str, path: impl AsRef<Path>) -> Self {
        self.artifacts
            .insert(role.to_owned(), path.as_ref().display().to_string());
        self
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).expect("manifest always serializes");
        std::fs::write(path, text).map_err(|e| WalError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| WalError::io(path, e))?;
        toml::from_str(&text).map_err(|e| WalError::invalid(format!("manifest {}", path.display()), e.message()))
    }
}
