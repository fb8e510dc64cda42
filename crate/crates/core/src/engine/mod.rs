//! Multi-round training, retrieval and checkpointing.

mod checkpoint;
mod config;
mod model;
mod retrieve;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointPhase, FORMAT_VERSION};
pub use config::{round_sizes, TrainConfig};
pub use model::{
    extend_item_context, forward_round, multi_round_objective, round_loss, total_loss, Model, ModelConfig, Objective,
    ObjectiveInput, RoundPlan, Scoring,
};
pub use retrieve::{retrieve, retrieve_lenient, RetrievalResult};
pub use train::{
    finetune, pretrain, sample_negatives, train_epoch_ada, EpochLog, LearningRates, Optimizer, TrainOutcome,
};
