//! Seeded stand-in corpus: sums of enveloped sinusoids in the speech band,
//! mixed with white Gaussian noise at exact SNRs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AudioBuffer, UtterancePair, SAMPLE_RATE};

const MIN_FREQ: f64 = 80.0;
const MAX_FREQ: f64 = 4000.0;
const CLEAN_PEAK: f64 = 0.5;
const MAX_PEAK: f64 = 0.99;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

fn clean_utterance(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let fs = f64::from(SAMPLE_RATE);
    let partials = rng.random_range(3..=8);
    let mut x = vec![0.0; len];
    for _ in 0..partials {
        let freq = rng.random_range(MIN_FREQ..MAX_FREQ);
        let amp = rng.random_range(0.2..1.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        // syllable-rate raised-cosine envelope
        let env_rate = rng.random_range(1.5..6.0);
        let env_phase = rng.random_range(0.0..2.0 * PI);
        for (t, v) in x.iter_mut().enumerate() {
            let time = t as f64 / fs;
            let env = 0.5 * (1.0 - (2.0 * PI * env_rate * time + env_phase).cos());
            *v += amp * env * (2.0 * PI * freq * time + phase).sin();
        }
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= CLEAN_PEAK / peak);
    }
    x
}

/// Generate `n_utterances` clean/noisy pairs. Utterance `i` uses
/// `snrs_db[i % snrs_db.len()]`; noise is scaled so the realized
/// clean-to-noise power ratio equals that SNR exactly.
pub fn synth_dataset(seed: u64, n_utterances: usize, utterance_len: usize, snrs_db: &[f64]) -> Vec<UtterancePair> {
    assert!(n_utterances >= 1, "need at least one utterance");
    assert!(!snrs_db.is_empty(), "need at least one SNR");
    assert!(utterance_len >= 1, "utterances must be non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_utterances)
        .map(|i| {
            let snr = snrs_db[i % snrs_db.len()];
            let mut clean = clean_utterance(&mut rng, utterance_len);
            let mut noise: Vec<f64> = (0..utterance_len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let gain = (power(&clean) / (power(&noise) * 10f64.powf(snr / 10.0))).sqrt();
            noise.iter_mut().for_each(|v| *v *= gain);
            let mut noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
            let peak = noisy.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > MAX_PEAK {
                let s = MAX_PEAK / peak;
                clean.iter_mut().for_each(|v| *v *= s);
                noisy.iter_mut().for_each(|v| *v *= s);
            }
            UtterancePair::new(
                format!("utt{i:04}"),
                AudioBuffer::from_samples(clean).expect("finite"),
                AudioBuffer::from_samples(noisy).expect("finite"),
                Some(snr),
            )
            .expect("equal lengths")
        })
        .collect()
}
