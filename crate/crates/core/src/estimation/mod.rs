//! Learning the separator from observations by minimizing an estimate of the
//! mutual information between output channels.

pub mod contrast;
pub mod entropy;
pub mod fit;
pub mod score;
pub mod update;
pub mod whiten;

pub use contrast::{
    contrast, contrast_gradient, entropy_scores, g_param_gradient, ContrastGradient, ContrastValue,
};
pub use entropy::{vasicek_entropy, vasicek_entropy_with_scores};
pub use fit::{
    fit, fit_from, fit_with_observer, initial_separator, TraceRecord, TrainConfig, TrainingTrace,
};
pub use score::{score_fn, ScoreEstimator};
pub use update::{g_update, natural_direction, normalize_compensators, w_update, MIN_TRAIN_SLOPE};
pub use whiten::{whiten, Whitening};
