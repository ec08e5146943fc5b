//! Masked PPO: networks, loss and gradients, and the training loop.

pub mod mlp;
pub mod ppo;
mod train;

pub use mlp::Mlp;
pub use ppo::{
    clipped_loss, clipped_objective, gae, Adam, Batch, LossCoefs, LossStats, MaskedCategorical,
};
pub use train::{
    evaluate, policy_hash, train, ActorCritic, Checkpoint, LogRow, PolicyAgent, RolloutBuffer,
    TrainConfig, TrainOutcome, UpdateRecord, CHECKPOINT_VERSION, LOG_HEADER,
};
