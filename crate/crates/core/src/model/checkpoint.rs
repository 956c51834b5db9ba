//! JSON checkpoint container. Every tensor carries its shape and floats use
//! shortest round-trip encoding, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AttentionKind, ModelParams};
use crate::error::{Result, WalError};

pub const CHECKPOINT_FORMAT: &str = "wal-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Container {
    format: String,
    version: u32,
    params: ModelParams,
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let c = Container {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        params: params.clone(),
    };
    let text = serde_json::to_string(&c).expect("params serialize");
    fs::write(path, text + "\n").map_err(|e| WalError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path).map_err(|e| WalError::io(path, e))?;
    let bad = |field: &str, reason: String| WalError::Parse {
        path: path.to_path_buf(),
        line: 1,
        field: field.to_string(),
        reason,
    };
    let c: Container = serde_json::from_str(&text).map_err(|e| bad("checkpoint", e.to_string()))?;
    if c.format != CHECKPOINT_FORMAT {
        return Err(bad("format", format!("expected {CHECKPOINT_FORMAT}, got {}", c.format)));
    }
    if c.version != CHECKPOINT_VERSION {
        return Err(bad("version", format!("unsupported version {}", c.version)));
    }
    validate(&c.params).map_err(|(f, r)| bad(&f, r))?;
    Ok(c.params)
}

fn validate(p: &ModelParams) -> std::result::Result<(), (String, String)> {
    let mats = [
        ("language.weight", &p.language.weight),
        ("vision.weight", &p.vision.weight),
        ("attention.bilinear", &p.attention.bilinear),
        ("attention.w1", &p.attention.w1),
        ("attention.w2", &p.attention.w2),
        ("disc.bvf", &p.disc.bvf),
    ];
    for (name, m) in mats {
        if m.data.len() != m.rows * m.cols {
            return Err((
                name.into(),
                format!("{}x{} matrix holds {} values", m.rows, m.cols, m.data.len()),
            ));
        }
    }
    let d_emb = p.language.weight.rows;
    let shape_err = |name: &str| Err((name.to_string(), "shape inconsistent with embedding size".to_string()));
    if p.language.bias.len() != d_emb || p.vision.weight.rows != d_emb || p.vision.bias.len() != d_emb {
        return shape_err("channels");
    }
    if p.disc.bvf.cols != d_emb || p.disc.bvf.rows == 0 {
        return shape_err("disc.bvf");
    }
    if p.disc.a_adv.len() != p.disc.input_mode.n_weights() {
        return shape_err("disc.a_adv");
    }
    match p.attention.kind {
        AttentionKind::Multiplicative if (p.attention.bilinear.rows, p.attention.bilinear.cols) != (d_emb, d_emb) => {
            return shape_err("attention.bilinear")
        }
        AttentionKind::Additive
            if p.attention.w1.rows != d_emb
                || p.attention.w2.rows != d_emb
                || p.attention.w1.cols != p.attention.w.len()
                || p.attention.w2.cols != p.attention.w.len() =>
        {
            return shape_err("attention.w1/w2/w")
        }
        _ => {}
    }
    if !p.is_finite() {
        return Err(("params".into(), "non-finite value".into()));
    }
    Ok(())
}
