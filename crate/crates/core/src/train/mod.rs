//! Loss and metrics, Adam with a warmup schedule, the epoch loop with early
//! stopping, evaluation in original units, and end-to-end gradient checking.

pub mod evaluate;
pub mod fit;
pub mod gradcheck;
pub mod metrics;
pub mod optim;

pub use evaluate::{evaluate, metrics_from_predictions, Evaluation, TargetMetrics};
pub use fit::{
    batch_loss_and_grads, check_dims, dataset_mse, predictions, train, EpochRecord, LrMode, StopReason, TrainConfig,
    TrainHistory, TrainOutcome,
};
pub use gradcheck::{gradcheck_config, gradient_check, GradcheckReport, TensorCheck, GRADCHECK_TOLERANCE};
pub use metrics::{mae, mse};
pub use optim::{adam_step, lr_schedule, AdamState};
