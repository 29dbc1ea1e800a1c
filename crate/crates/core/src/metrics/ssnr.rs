use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// 30 ms at 16 kHz.
pub const SSNR_FRAME: usize = 480;
/// 75 % overlap.
pub const SSNR_HOP: usize = 120;
pub const SSNR_MIN_DB: f64 = -10.0;
pub const SSNR_MAX_DB: f64 = 35.0;
/// Frames whose clean energy is at or below this are skipped.
pub const SILENCE_ENERGY: f64 = 1e-8;

/// Segmental SNR in dB: per-frame SNR clamped to [−10, 35], averaged over
/// frames with non-silent clean energy.
pub fn ssnr(clean: &AudioBuffer, test: &AudioBuffer) -> Result<f64> {
    ssnr_samples(clean.samples(), test.samples())
}

pub fn ssnr_samples(clean: &[f64], test: &[f64]) -> Result<f64> {
    if clean.len() != test.len() {
        return Err(Error::LengthMismatch(clean.len(), test.len()));
    }
    if clean.len() < SSNR_FRAME {
        return Err(Error::TooShort(format!(
            "{} samples, need at least one {SSNR_FRAME}-sample frame",
            clean.len()
        )));
    }
    let mut sum = 0.0;
    let mut frames = 0usize;
    let mut start = 0;
    while start + SSNR_FRAME <= clean.len() {
        let x = &clean[start..start + SSNR_FRAME];
        let y = &test[start..start + SSNR_FRAME];
        let energy: f64 = x.iter().map(|v| v * v).sum();
        if energy > SILENCE_ENERGY {
            let err: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            let db = if err == 0.0 {
                SSNR_MAX_DB
            } else {
                10.0 * (energy / err).log10()
            };
            sum += db.clamp(SSNR_MIN_DB, SSNR_MAX_DB);
            frames += 1;
        }
        start += SSNR_HOP;
    }
    if frames == 0 {
        return Err(Error::AllSilent);
    }
    Ok(sum / frames as f64)
}
