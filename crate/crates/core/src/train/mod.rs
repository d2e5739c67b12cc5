//! SGD with Nesterov momentum and weight decay under a cosine learning-rate
//! schedule, the epoch loop, evaluation, checkpoints and gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod run;
pub mod schedule;

pub use checkpoint::{checkpoint_load, checkpoint_save, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{run_suite, GradcheckReport, GroupReport, Selection, FD_STEP};
pub use optim::{sgd_step, OptimizerState, MOMENTUM, WEIGHT_DECAY};
pub use run::{evaluate, train_epoch, EpochMetrics, EvalMetrics, TrainConfig, Trainer};
pub use schedule::{cosine_lr, LrSchedule, LR_MAX, LR_MIN};
