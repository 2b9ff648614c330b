//! Feedforward regression networks trained with ADAM.

mod adam;
mod grad;
pub mod io;
mod loss;
mod matrix;
mod mlp;
mod scaling;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use grad::gradient;
pub use io::{load, save};
pub use loss::{mse, relative_mse, Loss};
pub use matrix::Matrix;
pub use mlp::{MlpModel, OutputActivation};
pub use scaling::{ColumnScale, Scaling, Transform};
pub use train::{fine_tune, train, TrainConfig, TrainReport};
