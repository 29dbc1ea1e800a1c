//! Least-squares adversarial objectives.
//!
//! `L_D = ½·mean[(D(x, x̃) − 1)²] + ½·mean[D(x̂, x̃)²]` and
//! `L_G = ½·mean[(D(x̂, x̃) − 1)²] + λ·mean_b[mean_t |x̂ − x|]`.

use crate::error::{Error, Result};
use crate::model::DiscView;
use crate::nn::VbnMode;

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn d_loss_from_scores(real: &[f64], fake: &[f64]) -> f64 {
    0.5 * mean(real.iter().map(|s| (s - 1.0) * (s - 1.0))) + 0.5 * mean(fake.iter().map(|s| s * s))
}

pub fn g_adv_from_scores(fake: &[f64]) -> f64 {
    0.5 * mean(fake.iter().map(|s| (s - 1.0) * (s - 1.0)))
}

/// Mean absolute error per segment, averaged over the batch.
pub fn l1_term(enhanced: &[Vec<f64>], clean: &[Vec<f64>]) -> f64 {
    mean(enhanced.iter().zip(clean).map(|(e, c)| {
        mean(e.iter().zip(c).map(|(a, b)| (a - b).abs()))
    }))
}

pub fn g_loss_from_parts(fake: &[f64], enhanced: &[Vec<f64>], clean: &[Vec<f64>], lambda_l1: f64) -> f64 {
    g_adv_from_scores(fake) + lambda_l1 * l1_term(enhanced, clean)
}

fn check_batch(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>]) -> Result<()> {
    if a.len() != b.len() || a.len() != c.len() {
        return Err(Error::ShapeMismatch(format!(
            "batch sizes differ: {}, {}, {}",
            a.len(),
            b.len(),
            c.len()
        )));
    }
    Ok(())
}

/// Discriminator objective over a batch of clean, noisy and enhanced
/// segments.
pub fn d_loss(
    d: &DiscView<'_>,
    clean: &[Vec<f64>],
    noisy: &[Vec<f64>],
    enhanced: &[Vec<f64>],
    mode: VbnMode,
) -> Result<f64> {
    check_batch(clean, noisy, enhanced)?;
    let real = clean.iter().zip(noisy).map(|(x, n)| d.forward(x, n, mode)).collect::<Result<Vec<_>>>()?;
    let fake = enhanced.iter().zip(noisy).map(|(x, n)| d.forward(x, n, mode)).collect::<Result<Vec<_>>>()?;
    Ok(d_loss_from_scores(&real, &fake))
}

/// Generator objective over a batch.
pub fn g_loss(
    d: &DiscView<'_>,
    enhanced: &[Vec<f64>],
    noisy: &[Vec<f64>],
    clean: &[Vec<f64>],
    lambda_l1: f64,
    mode: VbnMode,
) -> Result<f64> {
    check_batch(clean, noisy, enhanced)?;
    let fake = enhanced.iter().zip(noisy).map(|(x, n)| d.forward(x, n, mode)).collect::<Result<Vec<_>>>()?;
    Ok(g_loss_from_parts(&fake, enhanced, clean, lambda_l1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_discriminator_and_generator() {
        assert_eq!(d_loss_from_scores(&[1.0, 1.0], &[0.0, 0.0]), 0.0);
        let x = vec![vec![0.1, -0.2, 0.3]];
        assert_eq!(g_loss_from_parts(&[1.0], &x, &x, 100.0), 0.0);
    }

    #[test]
    fn constant_half_scores() {
        assert!((d_loss_from_scores(&[0.5; 4], &[0.5; 4]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_is_adversarial_only() {
        let e = vec![vec![0.5, 0.5]];
        let c = vec![vec![0.0, 0.0]];
        assert_eq!(g_loss_from_parts(&[0.2], &e, &c, 0.0), g_adv_from_scores(&[0.2]));
        assert!((l1_term(&e, &c) - 0.5).abs() < 1e-15);
    }
}
