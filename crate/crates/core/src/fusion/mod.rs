//! Dual-branch fusion classifier, training loop and metrics.

mod metrics;
mod model;
mod pooling;
mod train;

pub use metrics::{class_scores, ClassScores, Metrics};
pub use model::{FusionModel, ModelConfig, Variant};
pub use pooling::{attentive_pool, PoolingKind, TemporalPooling};
pub use train::{evaluate, predict_all, train, EpochRecord, Example, History, TrainConfig};
