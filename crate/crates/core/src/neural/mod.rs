//! Shallow neural heads over frozen features.

mod gradcheck;
pub mod io;
mod logreg;
mod loss;
mod mlp;
mod train;

pub use gradcheck::{gradient_check, relative_error, FD_EPS, MAX_PROBE_ROWS};
pub use logreg::{logreg_predict, logreg_train, LogRegModel};
pub use loss::{
    emotion_weights_from_counts, loss_bce, loss_cross_entropy, loss_weighted_pearson, LossKind,
    LossSpec, Targets,
};
pub use mlp::{argmax_rows, mlp_init, sigmoid, softmax_rows, Forward, Gradients, Head, MlpModel, DEFAULT_HIDDEN};
pub use train::{evaluate_loss, train, EpochRecord, TrainConfig, TrainHistory};
