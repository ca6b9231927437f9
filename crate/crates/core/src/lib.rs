//! Joint multimedia item and key-frame recommendation.
//!
//! Users, items and frames live in two latent spaces: a collaborative space
//! learned from the user-item rating matrix and a visual space in which frame
//! features are projected. Item visual embeddings are pooled from their frames
//! (plain average or a frame-level attention network) and the collaborative and
//! visual preferences are fused (plain sum or a hybrid rating attention). The
//! model is trained only on user-item feedback with a pairwise ranking loss; the
//! learned user visual vectors then rank each item's frames.
//!
//! Modules:
//! - [`data`]: loading, pruning, splitting and synthetic generation.
//! - [`model`]: parameters and every forward quantity.
//! - [`training`]: pairwise loss, analytic gradients, Adam and the fit loop.
//! - [`gradcheck`]: central finite-difference oracle for the gradients.
//! - [`eval`]: HR@K / NDCG@K under the sampled-item and within-item frame protocols.
//! - [`checkpoint`]: self-describing text checkpoints.
//! - [`cli`]: the `jifr` command line.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
