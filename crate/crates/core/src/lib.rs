//! Model-aided deep learning for energy-efficient wireless resource allocation.
//!
//! The crate is organised around four layers:
//!
//! - [`netsim`]: random network realizations (multi-user uplink drops, Poisson and
//!   square-grid base-station deployments).
//! - [`oracles`]: the analytic and Monte-Carlo optimizers that label training data
//!   (Dinkelbach power control, PPP energy efficiency, grid Monte-Carlo search).
//! - [`nn`]: a small feedforward regression engine (ReLU MLP, backpropagation, ADAM).
//! - [`pipeline`]: dataset construction, normalization, and the train-on-model and
//!   pre-train/fine-tune protocols with their evaluation metrics.
//!
//! [`config`] holds the run configuration and [`run`] the commands of the
//! command-line driver.

pub mod atomic;
pub mod config;
pub mod error;
pub mod netsim;
pub mod nn;
pub mod numeric;
pub mod oracles;
pub mod pipeline;
pub mod rng;
pub mod run;

pub use error::{Error, Result};
