//! Toy trainable recurrent models with diagonal, delta-rule and full-matrix
//! layers, hand-written gradients, AdamW and length-generalization
//! evaluation. Everything runs in `f64`.

pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod trainer;

use statetrack_core::tasks::TaskError;
use thiserror::Error;

pub use eval::{eval_length_gen, LengthScore, Predictor};
pub use model::{backward, forward, Head, LayerKind, LayerSpec, ModelConfig, SeqCache, TrainableModel};
pub use optim::{AdamW, Schedule};
pub use trainer::{train_loop, History, Record, TrainConfig};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not match the model")]
    StaleCache,
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("empty evaluation set")]
    EmptyEval,
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
