//! Convolutional regressor from FFT stacks to dispersion profiles, with
//! hand-written backpropagation.

mod checkpoint;
mod config;
mod gradcheck;
mod layers;
mod model;
mod optim;
mod train;

pub use config::{ConvBlock, FcNorm, InputScaling, LossKind, OptimizerKind, Pool, RegressorConfig};
pub use gradcheck::{check_model_gradients, gradient_check, tiny_config, GradCheckReport, MAX_CHECK_PARAMS};
pub use model::{init_model, Batch, Mode, ParamInfo, RegressorModel, RunningStats, BN_MOMENTUM};
pub use optim::{OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, RMSPROP_RHO};
pub use train::{train, EpochRecord, TrainHistory, TrainOptions};
