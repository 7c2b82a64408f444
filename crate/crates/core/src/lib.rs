//! Cross-lingual contrastive retrieval objectives on a toy dual encoder.
//!
//! This crate is `no_std` (with `alloc`) and carries all of the numerics:
//! cosine primitives, the retrieval / semantic-contrastive / language-contrastive
//! losses with hand-derived gradients, a hashed character n-gram linear dual
//! encoder, AdamW, batch samplers and the training step, a synthetic
//! multilingual world generator, retrieval metrics and margin-based bitext
//! mining. File formats, configuration and the command line live in the
//! `xlir` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod batch;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lang;
pub mod losses;
pub mod math;
pub mod mining;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod trainer;

pub use batch::{EmbeddingBatch, Role};
pub use encoder::{DualEncoderModel, FeatureExtractor, LinearEncoder, SparseVec, TowerGrad};
pub use error::{Error, Result};
pub use lang::Lang;
pub use losses::{JointLossWeights, LossOutput, MixedBatch, PairSet};
pub use math::{Matrix, Vector};
