//! Losses, Adam, Kendall's tau, training loops, and gradient checks. All
//! gradients are hand-written adjoints.

mod adam;
mod baseline;
mod data;
mod gradcheck;
mod kendall;
mod loss;
mod model;
mod trainer;

pub use adam::{adam_step, AdamState};
pub use baseline::{param_matched_width, FlatMlp, FlatMlpConfig};
pub use data::{load_examples, Example, Target};
pub use gradcheck::{
    check_function_gradient, check_model_gradients, relative_error, GradCheckReport, FD_STEP,
};
pub use kendall::kendall_tau;
pub use loss::{
    bce, bce_with_logit, cross_entropy_with_grad, loss_eval, mse_with_grad, sigmoid, LossKind,
    BCE_CLAMP,
};
pub use model::{output_loss, Trainable};
pub use trainer::{
    batch_loss, evaluate, forward_backward, thread_count, train_loop, Metrics, ReportRecord,
    TrainConfig, TrainingReport,
};
