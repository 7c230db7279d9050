//! Single-snapshot direction-of-arrival estimation for sparse linear arrays.
//!
//! The crate is organised bottom-up:
//!
//! * [`array_model`]: steering vectors, snapshot synthesis, masks, beamforming.
//! * [`data_gen`]: angle grid, combination enumeration, labels, pairs, dataset files.
//! * [`nn_core`]: dense / conv1d / pooling primitives with explicit backward passes,
//!   Adam, finite-difference gradient checking and checkpoints.
//! * [`snn_model`]: sparse augmentation, frequency embedding, the two-branch encoder,
//!   contrastive and BCE losses and the Siamese trainer.
//! * [`omp_baseline`]: greedy orthogonal matching pursuit over the steering dictionary.
//! * [`eval_metrics`]: macro multilabel metrics, PCA and cluster tightness.
//!
//! Batch-level loops run on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise; results are identical either way.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_model;
pub mod data_gen;
pub mod error;
pub mod eval_metrics;
pub mod nn_core;
pub mod omp_baseline;
pub mod par;
pub mod snn_model;

pub use error::{Error, Result};

/// Complex sample type used throughout the signal model.
pub type C64 = num_complex::Complex64;
