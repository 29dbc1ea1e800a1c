//! Utterance-level inference: pre-emphasis, back-to-back windows through
//! the generator with a fresh latent per window, concatenation and
//! de-emphasis.

use rand::Rng;
use rayon::prelude::*;

use super::{sample_latent, Generator, Latent};
use crate::audio::{deemphasize, preemphasize, reconstruct, segment_for_inference, AudioBuffer, EMPHASIS_COEF};
use crate::error::Result;

/// Enhance one utterance. Latents are drawn from `rng` in segment order
/// before any segment is processed, so `parallel` does not change the
/// result.
pub fn enhance_utterance<R: Rng + ?Sized>(
    gen: &Generator,
    noisy: &AudioBuffer,
    rng: &mut R,
    parallel: bool,
) -> Result<AudioBuffer> {
    let cfg = gen.config();
    let emph = preemphasize(noisy, EMPHASIS_COEF);
    let mut batch = segment_for_inference(&emph, cfg.window());
    let latents: Vec<Latent> = batch
        .segments
        .iter()
        .map(|_| sample_latent(cfg.latent_shape(), rng))
        .collect();
    let run = |(seg, z): (&Vec<f64>, &Latent)| gen.forward(seg, z);
    let out: Vec<Vec<f64>> = if parallel {
        batch.segments.par_iter().zip(latents.par_iter()).map(run).collect::<Result<_>>()?
    } else {
        batch.segments.iter().zip(latents.iter()).map(run).collect::<Result<_>>()?
    };
    batch.segments = out;
    Ok(deemphasize(&reconstruct(&batch)?, EMPHASIS_COEF))
}

/// Convenience wrapper over raw samples.
pub fn enhance_samples<R: Rng + ?Sized>(gen: &Generator, noisy: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let buf = AudioBuffer::from_samples(noisy.to_vec())?;
    Ok(enhance_utterance(gen, &buf, rng, false)?.into_samples())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::rng::{stream, Stream};

    #[test]
    fn length_preserved_and_deterministic() {
        let cfg = ModelConfig::shrunk(16, []);
        let g = Generator::build(&cfg, 2).unwrap();
        let x: Vec<f64> = (0..2500).map(|t| 0.3 * (t as f64 * 0.05).sin()).collect();
        let buf = AudioBuffer::from_samples(x).unwrap();
        let a = enhance_utterance(&g, &buf, &mut stream(4, Stream::Latent), false).unwrap();
        let b = enhance_utterance(&g, &buf, &mut stream(4, Stream::Latent), true).unwrap();
        assert_eq!(a.len(), 2500);
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|v| v.is_finite()));
    }
}
