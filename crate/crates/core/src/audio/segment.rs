use super::AudioBuffer;
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 16_384;

/// Fixed-length windows cut from one utterance. The last window is
/// zero-padded by `pad_len` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBatch {
    pub segments: Vec<Vec<f64>>,
    pub window: usize,
    pub pad_len: usize,
}

fn cut(x: &[f64], offsets: impl Iterator<Item = usize>, window: usize) -> Vec<Vec<f64>> {
    offsets
        .map(|o| {
            let mut seg = vec![0.0; window];
            let end = (o + window).min(x.len());
            seg[..end - o].copy_from_slice(&x[o..end]);
            seg
        })
        .collect()
}

/// Overlapping windows on a fixed grid of `window·(1 − overlap)` hops,
/// stopping at the first window that reaches the end of the signal.
pub fn segment_for_training(buf: &AudioBuffer, window: usize, overlap: f64) -> SegmentBatch {
    assert!(window > 0, "window must be positive");
    assert!((0.0..1.0).contains(&overlap), "overlap must lie in [0, 1)");
    let hop = ((window as f64 * (1.0 - overlap)).round() as usize).max(1);
    let n = buf.len();
    let count = if n <= window { 1 } else { (n - window).div_ceil(hop) + 1 };
    let last = (count - 1) * hop;
    SegmentBatch {
        segments: cut(buf.samples(), (0..count).map(|i| i * hop), window),
        window,
        pad_len: (last + window).saturating_sub(n),
    }
}

/// Back-to-back windows covering the signal.
pub fn segment_for_inference(buf: &AudioBuffer, window: usize) -> SegmentBatch {
    assert!(window > 0, "window must be positive");
    let count = buf.len().div_ceil(window);
    SegmentBatch {
        segments: cut(buf.samples(), (0..count).map(|i| i * window), window),
        window,
        pad_len: count * window - buf.len(),
    }
}

/// Concatenate segments and strip the trailing padding.
pub fn reconstruct(batch: &SegmentBatch) -> Result<AudioBuffer> {
    if batch.pad_len >= batch.window.max(1) {
        return Err(Error::InvalidPadLen {
            pad_len: batch.pad_len,
            window: batch.window,
        });
    }
    if let Some(bad) = batch.segments.iter().find(|s| s.len() != batch.window) {
        return Err(Error::ShapeMismatch(format!(
            "segment of {} samples in a batch of {}-sample windows",
            bad.len(),
            batch.window
        )));
    }
    let mut out: Vec<f64> = batch.segments.concat();
    let keep = out.len().saturating_sub(batch.pad_len);
    out.truncate(keep);
    AudioBuffer::from_samples(out)
}
