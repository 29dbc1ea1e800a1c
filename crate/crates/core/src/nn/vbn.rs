//! Virtual batch normalization.
//!
//! Statistics come from a fixed reference batch of `N` examples. In training
//! mode each example is normalized with the per-channel mean and variance of
//! the reference batch plus the example itself, the example carrying weight
//! `1/(N+1)`. In inference mode the reference statistics are used alone.
//! Reference statistics are treated as constants by the backward pass.

use super::tensor::FeatureMap;
use crate::error::{Error, Result};

pub const VBN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct VbnState {
    pub ref_mean: Vec<f64>,
    pub ref_var: Vec<f64>,
    /// Number of reference examples; zero until a reference batch is set.
    pub ref_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VbnMode {
    Training,
    Inference,
}

#[derive(Clone, Debug)]
pub struct VbnCache {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
    normalized: FeatureMap,
    mode: VbnMode,
}

#[derive(Clone, Debug)]
pub struct VbnGrads {
    pub input: FeatureMap,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

fn moments(x: &FeatureMap) -> (Vec<f64>, Vec<f64>) {
    let c = x.channels();
    let mut m = vec![0.0; c];
    let mut sq = vec![0.0; c];
    for t in 0..x.len() {
        for (ch, &v) in x.row(t).iter().enumerate() {
            m[ch] += v;
            sq[ch] += v * v;
        }
    }
    let n = x.len().max(1) as f64;
    m.iter_mut().for_each(|v| *v /= n);
    sq.iter_mut().for_each(|v| *v /= n);
    (m, sq)
}

impl VbnState {
    pub fn new(channels: usize) -> Self {
        Self {
            ref_mean: vec![0.0; channels],
            ref_var: vec![1.0; channels],
            ref_count: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.ref_mean.len()
    }

    pub fn is_initialized(&self) -> bool {
        self.ref_count > 0
    }

    /// Per-channel statistics of a reference batch, each example weighted
    /// equally.
    pub fn from_reference(batch: &[FeatureMap]) -> Result<Self> {
        let first = batch.first().ok_or(Error::EmptyDataset)?;
        let c = first.channels();
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for x in batch {
            if x.channels() != c {
                return Err(Error::ShapeMismatch("reference batch channel counts differ".into()));
            }
            let (m, s) = moments(x);
            for ch in 0..c {
                mean[ch] += m[ch];
                sq[ch] += s[ch];
            }
        }
        let n = batch.len() as f64;
        let ref_var = (0..c).map(|ch| (sq[ch] / n - (mean[ch] / n).powi(2)).max(0.0)).collect();
        Ok(Self {
            ref_mean: mean.into_iter().map(|v| v / n).collect(),
            ref_var,
            ref_count: batch.len(),
        })
    }

    /// Mean and variance used to normalize `x` in the given mode.
    fn stats_for(&self, x: &FeatureMap, mode: VbnMode) -> (Vec<f64>, Vec<f64>) {
        match mode {
            VbnMode::Inference => (self.ref_mean.clone(), self.ref_var.clone()),
            VbnMode::Training => {
                let (m, sq) = moments(x);
                let n = self.ref_count as f64;
                let w = 1.0 / (n + 1.0);
                let mut mean = Vec::with_capacity(m.len());
                let mut var = Vec::with_capacity(m.len());
                for ch in 0..m.len() {
                    let rm = self.ref_mean[ch];
                    let rsq = self.ref_var[ch] + rm * rm;
                    let cm = (n * rm + m[ch]) * w;
                    let csq = (n * rsq + sq[ch]) * w;
                    mean.push(cm);
                    var.push((csq - cm * cm).max(0.0));
                }
                (mean, var)
            }
        }
    }
}

pub fn vbn_forward(
    x: &FeatureMap,
    state: &VbnState,
    gamma: &[f64],
    beta: &[f64],
    mode: VbnMode,
) -> Result<(FeatureMap, VbnCache)> {
    if !state.is_initialized() {
        return Err(Error::UninitializedState);
    }
    let c = x.channels();
    if state.channels() != c || gamma.len() != c || beta.len() != c {
        return Err(Error::ShapeMismatch(format!(
            "virtual batch norm over {} channels applied to {c}",
            state.channels()
        )));
    }
    let (mean, var) = state.stats_for(x, mode);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + VBN_EPS).sqrt()).collect();
    let mut normalized = x.clone();
    let mut out = x.clone();
    for t in 0..x.len() {
        let n = normalized.row_mut(t);
        for ch in 0..c {
            n[ch] = (n[ch] - mean[ch]) * inv_std[ch];
        }
        let o = out.row_mut(t);
        for ch in 0..c {
            o[ch] = gamma[ch] * n[ch] + beta[ch];
        }
    }
    Ok((
        out,
        VbnCache {
            mean,
            inv_std,
            normalized,
            mode,
        },
    ))
}

/// Normalize every example of a batch independently.
pub fn vbn_apply(
    batch: &[FeatureMap],
    state: &VbnState,
    gamma: &[f64],
    beta: &[f64],
    mode: VbnMode,
) -> Result<Vec<FeatureMap>> {
    batch
        .iter()
        .map(|x| vbn_forward(x, state, gamma, beta, mode).map(|(y, _)| y))
        .collect()
}

pub fn vbn_backward(x: &FeatureMap, cache: &VbnCache, state: &VbnState, gamma: &[f64], grad_out: &FeatureMap) -> VbnGrads {
    let c = x.channels();
    let len = x.len();
    let mut g_gamma = vec![0.0; c];
    let mut g_beta = vec![0.0; c];
    for t in 0..len {
        let g = grad_out.row(t);
        let n = cache.normalized.row(t);
        for ch in 0..c {
            g_gamma[ch] += g[ch] * n[ch];
            g_beta[ch] += g[ch];
        }
    }
    let mut g_in = FeatureMap::zeros(len, c);
    for t in 0..len {
        let g = grad_out.row(t);
        let dst = g_in.row_mut(t);
        for ch in 0..c {
            dst[ch] = g[ch] * gamma[ch] * cache.inv_std[ch];
        }
    }
    if cache.mode == VbnMode::Training {
        // Statistics depend on x through the example's own 1/(N+1) share.
        let share = 1.0 / ((state.ref_count as f64 + 1.0) * len as f64);
        for ch in 0..c {
            let inv = cache.inv_std[ch];
            let mut d_mean = 0.0;
            let mut d_var = 0.0;
            for t in 0..len {
                let dxhat = grad_out.at(t, ch) * gamma[ch];
                d_mean -= dxhat * inv;
                d_var += dxhat * (x.at(t, ch) - cache.mean[ch]);
            }
            d_var *= -0.5 * inv * inv * inv;
            let m = cache.mean[ch];
            for t in 0..len {
                let dm = share;
                let dv = 2.0 * (x.at(t, ch) - m) * share;
                let v = g_in.at(t, ch) + d_mean * dm + d_var * dv;
                g_in.set(t, ch, v);
            }
        }
    }
    VbnGrads {
        input: g_in,
        gamma: g_gamma,
        beta: g_beta,
    }
}
