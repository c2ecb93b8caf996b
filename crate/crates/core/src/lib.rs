//! Quantum convolutional neural network simulation: circuits, encodings,
//! noise channels, ansatz construction, entanglement entropy, training and
//! classical baselines.

pub mod ansatz;
pub mod baseline;
pub mod circuit;
pub mod data;
pub mod encoding;
pub mod entropy;
pub mod error;
pub mod noise;
pub mod num;
pub mod train;

pub use error::{Error, Result};
