//! Dataset generation, persistence, losses and training.

pub mod dataset;
pub mod io;
pub mod loss;
pub mod train;

pub use dataset::{generate_dataset, generate_dataset_2d, DatasetConfig, Forcing, OperatorDataset, Sample};
pub use io::{load_dataset, save_dataset};
pub use loss::{empirical_risk, loss_mse, loss_mse_all, loss_penalized_2d, per_sample_risk, zero_predictor_risk};
pub use train::{train, train_with, TrainConfig, TrainOutcome};
