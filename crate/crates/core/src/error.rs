use thiserror::Error;

use crate::lp::LpError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tower: {0}")]
    InvalidTower(String),

    #[error("objects {a} and {b} interpenetrate by {depth:.3e} m")]
    Interpenetration { a: usize, b: usize, depth: f64 },

    #[error("glue config has {got} entries but the tower has {expected} contacts")]
    GlueLength { expected: usize, got: usize },

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("tower has {k} contacts; exhaustive search is capped at {cap}")]
    OracleCap { k: usize, cap: usize },

    #[error(
        "size {size}: accepted {accepted} of {attempts} sampled towers; \
         the generator geometry is probably misconfigured"
    )]
    Rejection { size: usize, attempts: u64, accepted: u64 },

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("the episode is already over")]
    EpisodeDone,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
