//! Tactile grasp classification toolkit.
//!
//! The crate covers the full experiment pipeline: a plain-text recording
//! format with a synthetic grasp generator standing in for a physical rig,
//! preprocessing into the tensor layouts the classifiers consume,
//! interleaved time-series splitting and taxel-shift augmentation, small
//! from-scratch CNN/LSTM models trained with RMSprop, hyperparameter
//! search, and a deterministic experiment harness.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod hpsearch;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod seed;
pub mod synthgrasp;

pub use error::{Error, Result};
