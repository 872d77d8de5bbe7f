//! PPO training: environments, rollouts, advantage estimation, the update
//! rule, the synchronous-then-asynchronous curriculum, and toy-process checks
//! of why delay-aware observations help.

mod buffer;
mod env;
pub mod infotheory;
mod ppo;
mod rollout;
mod train;

pub use buffer::{gae, normalize, RolloutBuffer, Transition};
pub use env::{ControlMode, EnvConfig, EnvObservation, NavEnv, TickOutcome};
pub use ppo::{
    clip_grad_norm, clipped_surrogate, loss_and_grad, ppo_update, AdamW, LossStats, Objective,
    PpoConfig, PpoSample,
};
pub use rollout::{collect_rollouts, Agent, EpisodeSummary, Worker};
pub use train::{
    train, trained_policy, write_metrics_jsonl, CurriculumConfig, IterationMetrics, Stage,
    TrainConfig, TrainOutcome,
};
