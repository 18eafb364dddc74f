//! Gaussian-process regression and the learned contact models built on it.

mod features;
mod kernel;
mod learned;
mod regressor;

pub use features::{extract_features, FeatureSpaceId, TargetSpaceId};
pub use kernel::{kernel, GpHyperparams, JITTER};
pub use learned::{
    train_learned_model, BaseModel, LearnedClass, LearnedContactModel, LearnedPrediction,
    TrainOptions, FORMAT_VERSION,
};
pub use regressor::{gp_fit, log_marginal_likelihood, GpFitOptions, GpRegressor};
