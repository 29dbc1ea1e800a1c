//! Spectral normalization by persisted power iteration.
//!
//! A kernel of `out_channels` outputs is viewed as the matrix `W` with one
//! row per output channel and one column per (tap, input channel). With the
//! persisted left vector `u`, the estimate is `σ = ‖Wᵀu‖` and `v = Wᵀu / σ`,
//! so `σ = uᵀWv`. The layer then uses `W / σ`.

use rand::Rng;

use super::init::unit_vector;
use crate::error::{Error, Result};

const MIN_SIGMA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    u: Vec<f64>,
}

/// A normalized kernel together with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct SpectralNorm {
    pub kernel: Vec<f64>,
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SpectralState {
    pub fn new<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Self {
        Self {
            u: unit_vector(rows, rng),
        }
    }

    pub fn from_u(u: Vec<f64>) -> Result<Self> {
        let norm = l2(&u);
        if norm <= MIN_SIGMA {
            return Err(Error::DegenerateKernel);
        }
        Ok(Self {
            u: u.into_iter().map(|x| x / norm).collect(),
        })
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub(crate) fn u_mut(&mut self) -> &mut Vec<f64> {
        &mut self.u
    }

    /// One power-iteration step on `W`, leaving `u` unit-norm.
    pub fn power_step(&mut self, kernel: &[f64]) -> Result<()> {
        let rows = self.u.len();
        let mut v = wt_times(kernel, rows, &self.u);
        normalize(&mut v)?;
        let mut u = w_times(kernel, rows, &v);
        normalize(&mut u)?;
        self.u = u;
        Ok(())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) -> Result<f64> {
    let n = l2(v);
    if n <= MIN_SIGMA || !n.is_finite() {
        return Err(Error::DegenerateKernel);
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(n)
}

/// `Wᵀu`; the flat kernel is column-major in `W` (rows fastest).
fn wt_times(kernel: &[f64], rows: usize, u: &[f64]) -> Vec<f64> {
    kernel
        .chunks_exact(rows)
        .map(|col| col.iter().zip(u).map(|(a, b)| a * b).sum())
        .collect()
}

fn w_times(kernel: &[f64], rows: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    for (col, &vj) in kernel.chunks_exact(rows).zip(v) {
        for (o, &w) in out.iter_mut().zip(col) {
            *o += w * vj;
        }
    }
    out
}

/// Normalize `kernel` (viewed as a `rows × kernel.len()/rows` matrix) by its
/// spectral norm estimate, first advancing the power iteration when
/// `update` is set.
pub fn spectral_normalize(kernel: &[f64], rows: usize, state: &mut SpectralState, update: bool) -> Result<SpectralNorm> {
    if rows == 0 || !kernel.len().is_multiple_of(rows) || state.u.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "kernel of {} values cannot be viewed with {rows} rows (u has {})",
            kernel.len(),
            state.u.len()
        )));
    }
    if update {
        state.power_step(kernel)?;
    }
    estimate(kernel, rows, state)
}

/// Normalization with the current `u`, without touching the state.
pub fn estimate(kernel: &[f64], rows: usize, state: &SpectralState) -> Result<SpectralNorm> {
    let mut v = wt_times(kernel, rows, &state.u);
    let sigma = normalize(&mut v)?;
    Ok(SpectralNorm {
        kernel: kernel.iter().map(|w| w / sigma).collect(),
        sigma,
        u: state.u.clone(),
        v,
    })
}

/// [`estimate`], except that an all-zero kernel normalizes to itself
/// (with `σ = 1` and `v = 0`) instead of failing. `W/σ` tends to zero along
/// any path into the origin, so this is the continuous extension.
pub fn estimate_or_zero(kernel: &[f64], rows: usize, state: &SpectralState) -> Result<SpectralNorm> {
    if kernel.iter().all(|&w| w == 0.0) {
        return Ok(SpectralNorm {
            kernel: kernel.to_vec(),
            sigma: 1.0,
            u: state.u.clone(),
            v: vec![0.0; kernel.len() / rows.max(1)],
        });
    }
    estimate(kernel, rows, state)
}

/// Just the `σ` that [`estimate_or_zero`] would divide by, without
/// building the normalized kernel.
pub fn sigma_or_one(kernel: &[f64], rows: usize, state: &SpectralState) -> Result<f64> {
    if kernel.iter().all(|&w| w == 0.0) {
        return Ok(1.0);
    }
    let mut v = wt_times(kernel, rows, &state.u);
    normalize(&mut v)
}

/// Map a gradient with respect to the normalized kernel back to the raw
/// kernel, holding `u` fixed: `G/σ − (⟨G, W⟩/σ²)·u vᵀ`.
pub fn spectral_backward(kernel: &[f64], sn: &SpectralNorm, grad_normalized: &[f64]) -> Vec<f64> {
    let rows = sn.u.len();
    let inner: f64 = grad_normalized.iter().zip(kernel).map(|(g, w)| g * w).sum();
    let coef = inner / (sn.sigma * sn.sigma);
    let mut out: Vec<f64> = grad_normalized.iter().map(|g| g / sn.sigma).collect();
    for (col, &vj) in out.chunks_exact_mut(rows).zip(&sn.v) {
        for (o, &ui) in col.iter_mut().zip(&sn.u) {
            *o -= coef * ui * vj;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Largest singular value from a dense SVD of the row-major view.
    fn svd_top(kernel: &[f64], rows: usize) -> f64 {
        let cols = kernel.len() / rows;
        let m = DMatrix::from_fn(rows, cols, |r, c| kernel[c * rows + r]);
        m.singular_values().max()
    }

    fn random_kernel(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    use rand::Rng;

    #[test]
    fn diagonal_converges_to_top_singular_value() {
        // W = diag(3, 1), stored column-major
        let w = [3.0, 0.0, 0.0, 1.0];
        let mut st = SpectralState::from_u(vec![1.0, 1.0]).unwrap();
        let mut sn = spectral_normalize(&w, 2, &mut st, true).unwrap();
        for _ in 0..60 {
            sn = spectral_normalize(&w, 2, &mut st, true).unwrap();
        }
        assert!((sn.sigma - 3.0).abs() < 1e-9);
        assert!((svd_top(&sn.kernel, 2) - 1.0).abs() < 1e-9);
        assert!((l2(st.u()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_norm_matrix_is_fixed_point() {
        let w = [1.0, 0.0, 0.0, 0.5];
        let mut st = SpectralState::from_u(vec![0.8, 0.6]).unwrap();
        for _ in 0..40 {
            spectral_normalize(&w, 2, &mut st, true).unwrap();
        }
        let sn = spectral_normalize(&w, 2, &mut st, true).unwrap();
        for (a, b) in sn.kernel.iter().zip(&w) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_matrix_matches_svd_after_50_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = random_kernel(&mut rng, 24);
        let mut st = SpectralState::new(4, &mut rng);
        let mut sn = None;
        for _ in 0..50 {
            sn = Some(spectral_normalize(&w, 4, &mut st, true).unwrap());
        }
        assert!((sn.unwrap().sigma - svd_top(&w, 4)).abs() < 1e-3);
    }

    #[test]
    fn normalized_norm_bounded_after_warmup() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows = rng.random_range(1..6);
            let cols = rng.random_range(1..9);
            let w = random_kernel(&mut rng, rows * cols);
            let mut st = SpectralState::new(rows, &mut rng);
            let mut sn = None;
            for _ in 0..20 {
                sn = Some(spectral_normalize(&w, rows, &mut st, true).unwrap());
            }
            let top = svd_top(&sn.unwrap().kernel, rows);
            assert!(top <= 1.0 + 1e-2, "seed {seed}: {top}");
        }
    }

    #[test]
    fn zero_kernel_is_degenerate() {
        let mut st = SpectralState::from_u(vec![1.0, 0.0]).unwrap();
        assert!(matches!(
            spectral_normalize(&[0.0; 6], 2, &mut st, true),
            Err(Error::DegenerateKernel)
        ));
        assert!(matches!(
            spectral_normalize(&[0.0; 6], 2, &mut st, false),
            Err(Error::DegenerateKernel)
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = random_kernel(&mut rng, 15);
        let r = random_kernel(&mut rng, 15);
        let st = SpectralState::new(3, &mut rng);
        let sn = estimate(&w, 3, &st).unwrap();
        let g = spectral_backward(&w, &sn, &r);
        let err = grad_check(
            |k| {
                let s = estimate(k, 3, &st).unwrap();
                s.kernel.iter().zip(&r).map(|(a, b)| a * b).sum()
            },
            &w,
            &g,
            1e-6,
        );
        assert!(err < 1e-7, "{err}");
    }
}
