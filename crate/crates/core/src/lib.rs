//! Watch-and-learn cross-modal training.
//!
//! Sentence and video-clip features are embedded into a shared space by two
//! trainable channels. A frame-level attention module pools clip frames under
//! the guidance of the sentence, and a discriminator built from background
//! visual features samples a binary gate per pair that either routes the pair
//! to the correspondence loss or to an adversarial loss whose label is fixed
//! to zero. Over training the adversarial pressure re-admits pairs the
//! network has become able to learn from.
//!
//! The crate is organised as:
//!
//! * [`corpus`]: synthetic noisy-correspondence corpora, file I/O, batch and frame sampling.
//! * [`model`]: parameters, the forward pass, the gate, checkpoints.
//! * [`training`]: losses, exact gradients, SGD, and the two-phase loop.
//! * [`eval`]: bidirectional retrieval metrics, gate statistics, attention export.
//! * [`config`] and [`cli`]: the flat run configuration, manifests, and the `wal` commands.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod training;

pub use error::{Result, WalError};
