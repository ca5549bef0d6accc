//! Synthetic tasks, a tiny residual model and its training loop.

pub mod model;
pub mod optim;
pub mod runner;
pub mod tasks;

pub use model::{BatchLoss, ModelConfig, TinyModel};
pub use optim::AdamW;
pub use runner::{evaluate, train_model, GradEvaluator, Metrics, Record, Sequential, TrainConfig};
pub use tasks::{gen_task, Example, TaskKind, TaskSpec};
