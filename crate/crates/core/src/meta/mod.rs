//! Meta-training: rollouts, losses, Adam, the training loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod rollout;
mod train;

pub use adam::Adam;
pub use checkpoint::{load_model, save_model, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{LossKind, TrainConfig, Weighting};
pub use loss::{partial_loss, partial_loss_value, step_weight, total_loss};
pub use rollout::{
    compress_score, initial_proposal, make_meta_dataset, replay, replay_gradient, rollout, rollout_gradient, MetaProblem,
    Rollout, RolloutSpec, StepRecord,
};
pub use train::{
    batch_gradient, init_model, train, train_from, train_with, validation_rmse, BatchGradient, EpochRecord, Execution, TrainLog,
    TrainOutcome, DIVERGENCE_PATIENCE,
};
