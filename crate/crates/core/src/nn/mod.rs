//! Minimal dense neural-network substrate: row-major matrices, two-layer
//! perceptrons with cached forward passes, exact reverse-mode gradients, and
//! Adam. Everything is f64 and deterministic; there is no external ML
//! dependency.

mod adam;
mod checkpoint;
mod matrix;
mod mlp;

pub use adam::{AdamParams, AdamState};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError,
    TensorEntry,
};
pub use matrix::Matrix;
pub use mlp::{Activation, Layer, Mlp, MlpCache, MlpGrads};
