use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WalError};
use crate::linalg::{l2_normalize, Matrix};

pub const N_TENSORS: usize = 13;

/// Positions of bvf, a_adv and b_adv in [`ModelParams::tensors`].
pub const DISCRIMINATOR_TENSORS: std::ops::Range<usize> = 8..11;

/// Initial slope of the discriminator classifier. Its inputs are cosine
/// similarities, so a unit slope leaves every gate logit near zero and the
/// gate close to a fair coin for the whole freeze phase.
pub const ADV_INIT_SLOPE: f64 = 5.0;

/// One embedding channel: `x ↦ normalize(relu(W x + b))`, `W` is `d_emb × d_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ChannelParams {
    pub fn d_in(&self) -> usize {
        self.weight.cols
    }

    pub fn d_emb(&self) -> usize {
        self.weight.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    /// Uniform weights over frames (no attention module).
    Mean,
    Dot,
    Multiplicative,
    Additive,
}

/// Only the tensors of the active `kind` are allocated; the others are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub kind: AttentionKind,
    /// `d_emb × d_emb`, score `sᵀ W h`.
    pub bilinear: Matrix,
    /// `d_emb × d_att`, score `w · tanh(W1ᵀ s + W2ᵀ h)`.
    pub w1: Matrix,
    pub w2: Matrix,
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `a (p_adv − p_lvc) + b`
    Residual,
    /// `a₁ p_adv + a₂ p_lvc + b`
    Concat,
    /// `a p_adv + b`
    AdvOnly,
}

impl InputMode {
    pub fn n_weights(self) -> usize {
        match self {
            InputMode::Concat => 2,
            InputMode::Residual | InputMode::AdvOnly => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParams {
    pub input_mode: InputMode,
    /// Background visual features, one per row (`B × d_emb`).
    pub bvf: Matrix,
    pub a_adv: Vec<f64>,
    pub b_adv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub language: ChannelParams,
    pub vision: ChannelParams,
    pub attention: AttentionParams,
    pub disc: DiscriminatorParams,
    pub a_lvc: f64,
    pub b_lvc: f64,
}

/// Shapes and variant choices needed to build a fresh [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelShape {
    pub d_in: usize,
    pub d_emb: usize,
    pub d_att: usize,
    pub attention: AttentionKind,
    pub input_mode: InputMode,
    pub bvf_count: usize,
}

impl ModelParams {
    /// Gaussian weights with variance `1/fan_in`, zero biases, identity
    /// classifiers. BVF rows are random unit vectors until
    /// [`init_bvf`](super::init_bvf) replaces them.
    pub fn init<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Result<Self> {
        let ModelShape { d_in, d_emb, d_att, .. } = *shape;
        if d_in == 0 || d_emb == 0 {
            return Err(WalError::invalid("d_emb", "dimensions must be positive"));
        }
        if shape.bvf_count == 0 {
            return Err(WalError::invalid("bvf_count", "must be at least 1"));
        }
        if shape.attention == AttentionKind::Additive && d_att == 0 {
            return Err(WalError::invalid("d_att", "must be positive for additive attention"));
        }
        let channel = |rng: &mut R| ChannelParams {
            weight: Matrix::random_normal(d_emb, d_in, (1.0 / d_in as f64).sqrt(), rng),
            bias: vec![0.0; d_emb],
        };
        let language = channel(rng);
        let vision = channel(rng);

        let emb_std = (1.0 / d_emb as f64).sqrt();
        let mut attention = AttentionParams {
            kind: shape.attention,
            bilinear: Matrix::zeros(0, 0),
            w1: Matrix::zeros(0, 0),
            w2: Matrix::zeros(0, 0),
            w: Vec::new(),
        };
        match shape.attention {
            AttentionKind::Mean | AttentionKind::Dot => {}
            AttentionKind::Multiplicative => {
                attention.bilinear = Matrix::random_normal(d_emb, d_emb, emb_std, rng);
            }
            AttentionKind::Additive => {
                attention.w1 = Matrix::random_normal(d_emb, d_att, emb_std, rng);
                attention.w2 = Matrix::random_normal(d_emb, d_att, emb_std, rng);
                let m = Matrix::random_normal(1, d_att, (1.0 / d_att as f64).sqrt(), rng);
                attention.w = m.data;
            }
        }

        let mut bvf = Matrix::random_normal(shape.bvf_count, d_emb, 1.0, rng);
        for i in 0..bvf.rows {
            let row = l2_normalize(bvf.row(i));
            bvf.row_mut(i).copy_from_slice(&row);
        }
        let a_adv = match shape.input_mode {
            InputMode::Residual | InputMode::AdvOnly => vec![ADV_INIT_SLOPE],
            InputMode::Concat => vec![ADV_INIT_SLOPE, -ADV_INIT_SLOPE],
        };

        Ok(ModelParams {
            language,
            vision,
            attention,
            disc: DiscriminatorParams {
                input_mode: shape.input_mode,
                bvf,
                a_adv,
                b_adv: 0.0,
            },
            a_lvc: 1.0,
            b_lvc: 0.0,
        })
    }

    pub fn d_in(&self) -> usize {
        self.language.d_in()
    }

    pub fn d_emb(&self) -> usize {
        self.language.d_emb()
    }

    /// Same shapes, every entry zero. Used as the gradient container.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        z
    }

    /// Every trainable tensor in a fixed order; see [`DISCRIMINATOR_TENSORS`].
    pub fn tensors(&self) -> [&[f64]; N_TENSORS] {
        [
            &self.language.weight.data,
            &self.language.bias,
            &self.vision.weight.data,
            &self.vision.bias,
            &self.attention.bilinear.data,
            &self.attention.w1.data,
            &self.attention.w2.data,
            &self.attention.w,
            &self.disc.bvf.data,
            &self.disc.a_adv,
            std::slice::from_ref(&self.disc.b_adv),
            std::slice::from_ref(&self.a_lvc),
            std::slice::from_ref(&self.b_lvc),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; N_TENSORS] {
        [
            &mut self.language.weight.data,
            &mut self.language.bias,
            &mut self.vision.weight.data,
            &mut self.vision.bias,
            &mut self.attention.bilinear.data,
            &mut self.attention.w1.data,
            &mut self.attention.w2.data,
            &mut self.attention.w,
            &mut self.disc.bvf.data,
            &mut self.disc.a_adv,
            std::slice::from_mut(&mut self.disc.b_adv),
            std::slice::from_mut(&mut self.a_lvc),
            std::slice::from_mut(&mut self.b_lvc),
        ]
    }

    /// Tensor lengths in visiting order plus the matrix row counts; two
    /// parameter sets are shape-compatible when these agree.
    pub fn shape_signature(&self) -> Vec<usize> {
        let mut sig: Vec<usize> = self.tensors().iter().map(|t| t.len()).collect();
        sig.extend([
            self.language.weight.rows,
            self.vision.weight.rows,
            self.attention.w1.cols,
            self.disc.bvf.rows,
        ]);
        sig
    }

    pub fn n_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale · other`; shapes must agree.
    pub fn add_scaled(&mut self, scale: f64, other: &ModelParams) {
        for (t, o) in self.tensors_mut().into_iter().zip(other.tensors()) {
            debug_assert_eq!(t.len(), o.len());
            for (x, y) in t.iter_mut().zip(o) {
                *x += scale * y;
            }
        }
    }

    /// Squared Euclidean norm over every tensor.
    pub fn norm_sq(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.iter()).map(|x| x * x).sum()
    }

    /// Zeroes bvf, a_adv and b_adv.
    pub fn clear_discriminator(&mut self) {
        self.disc.bvf.data.iter_mut().for_each(|x| *x = 0.0);
        self.disc.a_adv.iter_mut().for_each(|x| *x = 0.0);
        self.disc.b_adv = 0.0;
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),+];

            pub fn as_str(self) -> &'static str {
                match self { $(Self::$variant => $name),+ }
            }
        }

        impl ::std::fmt::Display for $ty {
            fn fmt(&self, f: &mut ::std::fmt::Formatter<'_>) -> ::std::fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl ::std::str::FromStr for $ty {
            type Err = $crate::error::WalError;

            fn from_str(s: &str) -> $crate::error::Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    _ => Err($crate::error::WalError::invalid(
                        stringify!($ty),
                        format!("unknown value {s:?}, expected one of {:?}", Self::NAMES),
                    )),
                }
            }
        }
    };
}

pub(crate) use text_enum;

text_enum!(AttentionKind {
    Mean => "mean",
    Dot => "dot",
    Multiplicative => "multiplicative",
    Additive => "additive",
});

text_enum!(InputMode {
    Residual => "residual",
    Concat => "concat",
    AdvOnly => "adv_only",
});
