//! Optimization, the training loop, evaluation and checkpoint persistence.

pub mod adamax;
pub mod checkpoint;
pub mod metrics;
pub mod trainer;

pub use adamax::{adamax_step, AdamaxState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, ModelKind, CHECKPOINT_MAGIC, FORMAT_VERSION};
pub use metrics::{argmax, Metrics};
pub use trainer::{
    encode_corpus, evaluate, predict, score_encoded, train_model, train_model_with, EpochRecord, Prediction,
    TrainConfig, TrainHistory, TrainOutcome,
};
