//! Meta-learning trainer: task sampling inside the source domains, the
//! bi-level inner step, serial/parallel training with an averaging merge,
//! latent mixup, and the ERM baseline.

pub mod aggregate;
pub mod config;
pub mod inner;
pub mod metamix;
pub mod model_loss;
pub mod outer;
pub mod tasks;
pub mod train;

pub use aggregate::SourcePriorAggregate;
pub use config::{MetaConfig, OptimizerConfig, OptimizerKind, Toggles};
pub use inner::{inner_step, serial_inner_loop, InnerStepStats, MetaLoss};
pub use metamix::{draw_mix_plan, metamix, MixOutcome};
pub use model_loss::TrajectoryLossModel;
pub use outer::parallel_outer_update;
pub use tasks::{sample_tasks, DomainBatches, DomainPool, TaskBatch, TaskRole};
pub use train::{
    baseline_train, build_domain_pool, derive_seed, path_seed, train, AdamState, EpochLog, ErmConfig,
    LossLogEntry, LrState, TrainReport, TrainSetup, TrainState,
};
