//! # sed-forge-core
//!
//! Polyphonic sound event detection with convolutional recurrent neural
//! networks, written without `std` (only `alloc` is required).
//!
//! The crate covers the whole numeric path:
//!
//! - [`features`]: STFT, mel filterbank, log-mel energies, per-band
//!   normalization and context-window splitting.
//! - [`synth`]: event annotations, frame-level target rolls and synthetic
//!   polyphonic mixtures with exact ground truth.
//! - [`nn`]: a small layer engine (same-padded convolution, batch norm,
//!   frequency max pooling, GRU, dropout, temporal max pooling, dense)
//!   with exact gradients.
//! - [`train`]: binary cross-entropy, Adam and early-stopped training.
//! - [`detect`]: windowed prediction, thresholding and event lists.
//! - [`metrics`]: segment-based F1 / error rate, legacy F1 and EER.
//!
//! File formats, audio decoding and the command line live in the
//! `sed-forge` crate.
//!
//! ```text
//! audio -> log-mel -> normalize -> windows -> CRNN -> probabilities -> threshold -> events
//! ```

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod detect;
mod error;
pub mod features;
pub mod metrics;
pub mod nn;
pub mod rng;
mod scalar;
pub mod synth;
mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::Tensor;
