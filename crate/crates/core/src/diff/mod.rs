//! Minimal dense reverse-mode differentiation engine.
//!
//! Values are row-major `f64` tensors (almost always 2D: rows are entities,
//! columns are features). A [`Tape`] records operations as they run and
//! [`Tape::backward`] accumulates gradients for every parameter that took
//! part. Parameters live in a [`ParameterStore`] that also owns the Adam
//! moments.

mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{load_store, read_store, save_store, write_store, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, rel_err, GradCheck};
pub use layers::{gru_step, mlp_apply, GruCell, Linear, Mlp};
pub use params::{AdamConfig, Gradients, ParamId, ParameterStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;

