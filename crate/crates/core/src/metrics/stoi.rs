//! Short-time objective intelligibility.
//!
//! Both signals are resampled to 10 kHz, frames that are more than 40 dB
//! below the loudest clean frame are dropped, and the remainder is analysed
//! with 256-sample Hann frames (50 % overlap, 512-point FFT). Power is
//! pooled into 15 one-third-octave bands starting at 150 Hz. Over every
//! 30-frame (384 ms) envelope segment the degraded envelope is normalized
//! to the clean energy, clipped at a −15 dB signal-to-distortion bound and
//! correlated with the clean envelope; the result is the mean correlation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

const FS: usize = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

pub fn stoi(clean: &AudioBuffer, test: &AudioBuffer) -> Result<f64> {
    stoi_samples(clean.samples(), test.samples(), clean.rate())
}

pub fn stoi_samples(clean: &[f64], test: &[f64], rate: u32) -> Result<f64> {
    if clean.len() != test.len() {
        return Err(Error::LengthMismatch(clean.len(), test.len()));
    }
    let (x, y) = if rate as usize == FS {
        (clean.to_vec(), test.to_vec())
    } else if rate == SAMPLE_RATE {
        (resample_16k_to_10k(clean), resample_16k_to_10k(test))
    } else {
        return Err(Error::UnsupportedFormat(format!("stoi needs 16 or 10 kHz input, got {rate} Hz")));
    };
    let (x, y) = remove_silent_frames(&x, &y)?;
    let obm = third_octave_matrix();
    let xt = band_envelopes(&x, &obm);
    let yt = band_envelopes(&y, &obm);
    let frames = xt.len();
    if frames < SEGMENT {
        return Err(Error::TooShort(format!(
            "{frames} active frames after silence removal, need {SEGMENT}"
        )));
    }
    let clip = 10f64.powf(-BETA_DB / 20.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for end in SEGMENT..=frames {
        for band in 0..BANDS {
            let xs: Vec<f64> = (end - SEGMENT..end).map(|m| xt[m][band]).collect();
            let ys: Vec<f64> = (end - SEGMENT..end).map(|m| yt[m][band]).collect();
            let alpha = norm(&xs) / (norm(&ys) + EPS);
            let yp: Vec<f64> = ys.iter().zip(&xs).map(|(yv, xv)| (yv * alpha).min(xv * (1.0 + clip))).collect();
            total += correlation(&xs, &yp);
            count += 1;
        }
    }
    Ok((total / count as f64).clamp(0.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let ma = a.iter().sum::<f64>() / a.len() as f64;
    let mb = b.iter().sum::<f64>() / b.len() as f64;
    let ca: Vec<f64> = a.iter().map(|v| v - ma).collect();
    let cb: Vec<f64> = b.iter().map(|v| v - mb).collect();
    let na = norm(&ca) + EPS;
    let nb = norm(&cb) + EPS;
    ca.iter().zip(&cb).map(|(x, y)| (x / na) * (y / nb)).sum()
}

/// Hann window of `FRAME` points without the zero end-points.
fn hann() -> Vec<f64> {
    (1..=FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (FRAME + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    let last = len.checked_sub(FRAME);
    (0..).map(|i| i * HOP).take_while(move |&s| last.is_some_and(|l| s <= l))
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = hann();
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    if starts.is_empty() {
        return Err(Error::TooShort(format!("{} samples at 10 kHz", x.len())));
    }
    let window = |s: &[f64], start: usize| -> Vec<f64> { (0..FRAME).map(|i| w[i] * s[start + i]).collect() };
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| 20.0 * (norm(&window(x, s)) + EPS).log10())
        .collect();
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    let out_len = kept.len().saturating_sub(1) * HOP + FRAME;
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let (xf, yf) = (window(x, s), window(y, s));
        for j in 0..FRAME {
            xo[i * HOP + j] += xf[j];
            yo[i * HOP + j] += yf[j];
        }
    }
    Ok((xo, yo))
}

/// Rows of 0/1 weights over the `NFFT/2 + 1` bins, one per band.
fn third_octave_matrix() -> Vec<Vec<f64>> {
    let bins = NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|i| i as f64 * FS as f64 / NFFT as f64).collect();
    let nearest = |f: f64| -> usize {
        let mut best = 0;
        for (i, &v) in freqs.iter().enumerate() {
            if (v - f).powi(2) < (freqs[best] - f).powi(2) {
                best = i;
            }
        }
        best
    };
    (0..BANDS)
        .map(|k| {
            let lo = nearest(MIN_FREQ * 2f64.powf((2.0 * k as f64 - 1.0) / 6.0));
            let hi = nearest(MIN_FREQ * 2f64.powf((2.0 * k as f64 + 1.0) / 6.0));
            (0..bins).map(|b| if b >= lo && b < hi { 1.0 } else { 0.0 }).collect()
        })
        .collect()
}

/// Per frame, the band magnitudes `sqrt(Σ_bins |X|²)`.
fn band_envelopes(x: &[f64], obm: &[Vec<f64>]) -> Vec<[f64; BANDS]> {
    let w = hann();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(NFFT);
    frame_starts(x.len())
        .map(|s| {
            let mut buf: Vec<Complex<f64>> = (0..NFFT)
                .map(|i| Complex::new(if i < FRAME { w[i] * x[s + i] } else { 0.0 }, 0.0))
                .collect();
            fft.process(&mut buf);
            let power: Vec<f64> = buf[..=NFFT / 2].iter().map(|c| c.norm_sqr()).collect();
            let mut out = [0.0; BANDS];
            for (o, row) in out.iter_mut().zip(obm) {
                *o = row.iter().zip(&power).map(|(a, p)| a * p).sum::<f64>().sqrt();
            }
            out
        })
        .collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Polyphase resampling by 5/8 with a Kaiser-windowed sinc low-pass
/// (β = 5, 161 taps), zero-phase aligned.
fn resample_16k_to_10k(x: &[f64]) -> Vec<f64> {
    const UP: usize = 5;
    const DOWN: usize = 8;
    let half = 10 * DOWN;
    let taps = 2 * half + 1;
    let cutoff = 1.0 / DOWN as f64;
    let beta = 5.0;
    let i0b = bessel_i0(beta);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - half as f64;
            let sinc = if m == 0.0 {
                1.0
            } else {
                (PI * cutoff * m).sin() / (PI * cutoff * m)
            };
            let r = 2.0 * n as f64 / (taps - 1) as f64 - 1.0;
            cutoff * sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
        })
        .collect();
    let dc: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= UP as f64 / dc);

    let out_len = (x.len() * UP).div_ceil(DOWN);
    (0..out_len)
        .map(|m| {
            // y[m] = Σ_j x[j] · h[m·DOWN − j·UP + half]
            let centre = m * DOWN + half;
            let j_max = (centre / UP).min(x.len().saturating_sub(1));
            let j_min = centre.saturating_sub(taps - 1).div_ceil(UP);
            (j_min..=j_max)
                .filter(|&j| j < x.len())
                .map(|j| x[j] * h[centre - j * UP])
                .sum()
        })
        .collect()
}
