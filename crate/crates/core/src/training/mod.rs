//! Loss, backpropagation, momentum SGD and the training loop.

mod backprop;
mod config;
mod gradcheck;
mod optim;
mod report;
mod trainer;

pub use backprop::{
    backprop_step, cross_entropy, regularized_step_loss, step_loss, Gradients, Regularization, StepGradients,
    PROB_FLOOR,
};
pub use config::{DevMetric, TrainConfig};
pub use gradcheck::{
    check_context, grad_check, random_context, relative_error, BlockError, GradCheckConfig, GradCheckReport,
};
pub use optim::{sgd_update, MomentumSgd, Velocity};
pub use report::{EpochStats, TrainReport};
pub use trainer::{evaluate, evaluate_model, train, train_with_progress, InitialEmbeddings, Stage, TrainOutcome};
