//! Self-attention speech enhancement GAN operating on raw 16 kHz waveforms.
//!
//! The crate is organized bottom-up:
//!
//! - [`audio`]: WAV I/O, pre/de-emphasis, segmentation, synthetic corpora
//! - [`nn`]: strided (transposed) convolution, activations, pooling, spectral
//!   and virtual batch normalization, finite-difference checking
//! - [`attention`]: the non-local self-attention layer and its memory model
//! - [`model`]: generator and discriminator with configurable attention
//!   placement, plus utterance-level enhancement
//! - [`train`]: least-squares objectives, RMSprop, the adversarial loop and
//!   checkpoints
//! - [`metrics`]: segmental SNR and STOI
//! - [`cli`]: the `sasegan` command-line tool

pub mod attention;
pub mod audio;
pub mod cli;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
