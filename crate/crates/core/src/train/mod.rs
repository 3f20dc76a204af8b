//! Objective, optimizer, training loop, seed ensembles and error statistics.

mod adadelta;
mod ensemble;
mod loss;
mod stats;
mod trainer;

pub use adadelta::{AdadeltaState, DEFAULT_EPSILON, DEFAULT_RHO};
pub use ensemble::{select_run, train_ensemble, EnsembleResult, RunFailure};
pub use loss::{batch_mse, mse_loss};
pub use stats::{test_error_ci, ConfidenceInterval};
pub use trainer::{evaluate_mse, train, SampleTensors, TrainConfig, TrainRun};
