//! Audio handling: WAV files, emphasis filters, segmentation and synthetic
//! corpora.

mod dataset;
mod emphasis;
mod segment;
mod synth;
mod wav;

pub use dataset::{load_pair_dir, pair_files, write_pair_dir};
pub use emphasis::{deemphasize, preemphasize, EMPHASIS_COEF};
pub use segment::{reconstruct, segment_for_inference, segment_for_training, SegmentBatch, DEFAULT_WINDOW};
pub use synth::synth_dataset;
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Mono waveform at 16 kHz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, rate: u32) -> Result<Self> {
        if rate != SAMPLE_RATE {
            return Err(Error::UnsupportedFormat(format!("sample rate {rate} Hz, expected {SAMPLE_RATE}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, rate })
    }

    /// Buffer at the pipeline rate.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A clean utterance and its noisy counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct UtterancePair {
    pub id: String,
    pub clean: AudioBuffer,
    pub noisy: AudioBuffer,
    pub snr_db: Option<f64>,
}

impl UtterancePair {
    pub fn new(id: impl Into<String>, clean: AudioBuffer, noisy: AudioBuffer, snr_db: Option<f64>) -> Result<Self> {
        if clean.len() != noisy.len() {
            return Err(Error::LengthMismatch(clean.len(), noisy.len()));
        }
        Ok(Self {
            id: id.into(),
            clean,
            noisy,
            snr_db,
        })
    }
}
