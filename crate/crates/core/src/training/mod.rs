//! Rollouts, the policy-gradient and supervised objectives, optimizers,
//! curricula, and the train and evaluation loops.

mod curriculum;
mod objective;
mod optim;
mod rollout;
mod train;

pub use curriculum::{traffic_curriculum, CurriculumSchedule};
pub use objective::{reinforce_update, replay, supervised_update, Gradient, ReplayStep};
pub use optim::{
    clip_grad_norm, Optimizer, OptimizerKind, ADAM_BETA1, ADAM_BETA2, OPT_EPS, RMSPROP_DECAY,
};
pub use rollout::{
    returns_to_go, rollout, rollout_episode, EpisodeSeed, EpisodeTrace, RolloutOptions, StepTrace,
};
pub use train::{
    evaluate, reinforce_batch, supervised_batch, train, write_metrics_csv, write_metrics_row,
    EpochMetrics, Evaluation, Objective, Parallelism, TrainConfig, METRICS_HEADER,
};
