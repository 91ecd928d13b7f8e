//! Small convolutional pixel classifier and its training loop.

mod network;
mod train;

pub use network::{
    finite_diff_check, forward, loss_gradient, param_count, GradCheck, ModelParams, ARCHITECTURE, MIN_SIDE,
};
pub use train::{train, Objective, TrainConfig, TrainLog, TrainMode, TrainRecord, TrainingExample};
