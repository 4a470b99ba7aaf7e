//! Synthetic tasks and a tiny trainable attention model with learnable
//! spectral RPEs.

mod task;
mod tiny;
mod train;

pub use task::{generate_task, Dataset, Example, TaskKind, TaskSpec};
pub use tiny::{AttentionKind, ModelConfig, RpeInit, TinyModel};
pub use train::{loss_gradcheck, pearson, train, LossRecord, Split, TrainConfig, TrainReport, DIVERGENCE_LOSS};
