//! Strided 1-D convolution and its transpose.
//!
//! Kernels are stored `width × in_channels × out_channels`, flattened with
//! `out_channels` fastest. Both directions share the "same"-style geometry:
//! a convolution over `n` samples yields `ceil(n / stride)` outputs, padded
//! with `max((out - 1)·stride + width - n, 0)` zeros of which `floor(total/2)`
//! go on the left.

use rand::Rng;

use super::init::glorot_uniform;
use super::tensor::FeatureMap;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub width: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// Parameter and input gradients of a (de)convolution.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: FeatureMap,
}

/// Output length and left padding of a convolution over `in_len` samples.
pub fn same_padding(in_len: usize, stride: usize, width: usize) -> (usize, usize) {
    let out_len = in_len.div_ceil(stride);
    let span = out_len.saturating_sub(1) * stride + width;
    let total = span.saturating_sub(in_len);
    (out_len, total / 2)
}

impl ConvParams {
    pub fn zeros(width: usize, stride: usize, in_channels: usize, out_channels: usize) -> Result<Self> {
        if width.is_multiple_of(2) || stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidConfig(format!(
                "conv layer needs odd width and positive stride/channels \
                 (width {width}, stride {stride}, {in_channels}->{out_channels})"
            )));
        }
        Ok(Self {
            kernel: vec![0.0; width * in_channels * out_channels],
            bias: vec![0.0; out_channels],
            width,
            stride,
            in_channels,
            out_channels,
        })
    }

    /// Glorot-uniform kernel, zero bias.
    pub fn init<R: Rng + ?Sized>(
        width: usize,
        stride: usize,
        in_channels: usize,
        out_channels: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut p = Self::zeros(width, stride, in_channels, out_channels)?;
        glorot_uniform(&mut p.kernel, width * in_channels, width * out_channels, rng);
        Ok(p)
    }

    #[inline]
    fn krow(&self, kernel: &[f64], w: usize, ci: usize) -> std::ops::Range<usize> {
        let start = (w * self.in_channels + ci) * self.out_channels;
        debug_assert!(start + self.out_channels <= kernel.len());
        start..start + self.out_channels
    }

    /// Same kernel with the channel axes swapped, so that convolving with the
    /// result is the adjoint of transposed convolution with `self`.
    pub fn transposed(&self) -> ConvParams {
        let mut kernel = vec![0.0; self.kernel.len()];
        for w in 0..self.width {
            for ci in 0..self.in_channels {
                for co in 0..self.out_channels {
                    let src = (w * self.in_channels + ci) * self.out_channels + co;
                    let dst = (w * self.out_channels + co) * self.in_channels + ci;
                    kernel[dst] = self.kernel[src];
                }
            }
        }
        ConvParams {
            kernel,
            bias: vec![0.0; self.in_channels],
            width: self.width,
            stride: self.stride,
            in_channels: self.out_channels,
            out_channels: self.in_channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }

    fn check_input(&self, input: &FeatureMap) -> Result<()> {
        if input.channels() != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "layer expects {} input channels, got {}",
                self.in_channels,
                input.channels()
            )));
        }
        Ok(())
    }

    /// Range of kernel taps that land inside `[0, n)` for an output whose
    /// first tap sits at `base`.
    #[inline]
    /// Output rows `lo..hi` whose window places tap `w` inside the input.
    fn outputs_reading_tap(&self, w: usize, left: usize, n: usize) -> (usize, usize) {
        let lo = left.saturating_sub(w).div_ceil(self.stride);
        let hi = (n + left).saturating_sub(w).div_ceil(self.stride);
        (lo, hi)
    }

    fn valid_taps(&self, base: isize, n: usize) -> std::ops::Range<usize> {
        let lo = (-base).max(0) as usize;
        let hi = (n as isize - base).clamp(0, self.width as isize) as usize;
        lo.min(hi)..hi
    }
}

/// Strided cross-correlation with "same"-style zero padding.
pub fn conv1d(input: &FeatureMap, p: &ConvParams) -> Result<FeatureMap> {
    conv1d_with_kernel(input, p, &p.kernel)
}

/// [`conv1d`] using `kernel` in place of `p.kernel` (for normalized weights).
pub fn conv1d_with_kernel(input: &FeatureMap, p: &ConvParams, kernel: &[f64]) -> Result<FeatureMap> {
    conv1d_impl(input, p, kernel, None)
}

/// [`conv1d`] with the kernel `kernel / divisor`, bit-identical to
/// materializing the divided kernel first but without the copy.
pub fn conv1d_divided_kernel(input: &FeatureMap, p: &ConvParams, kernel: &[f64], divisor: f64) -> Result<FeatureMap> {
    conv1d_impl(input, p, kernel, Some(divisor))
}

fn conv1d_impl(input: &FeatureMap, p: &ConvParams, kernel: &[f64], divisor: Option<f64>) -> Result<FeatureMap> {
    p.check_input(input)?;
    let n = input.len();
    let (out_len, left) = same_padding(n, p.stride, p.width);
    let (ci_n, co) = (p.in_channels, p.out_channels);
    let mut out = FeatureMap::zeros(out_len, co);
    for o in 0..out_len {
        out.row_mut(o).copy_from_slice(&p.bias);
    }
    // Deep layers have few outputs and large kernels, so the kernel is the
    // traffic to avoid: walk it once per cache-sized tile of output rows.
    // Every output still receives its terms ordered by (tap, input channel),
    // which keeps results identical to the direct double sum.
    let tile = (CONV_TILE_BYTES / (8 * co)).max(1);
    let mut scratch = vec![0.0; if divisor.is_some() { 4 * co } else { 0 }];
    for o0 in (0..out_len).step_by(tile) {
        let o1 = (o0 + tile).min(out_len);
        for w in 0..p.width {
            let (lo, hi) = p.outputs_reading_tap(w, left, n);
            let rows = lo.max(o0)..hi.min(o1);
            if rows.is_empty() {
                continue;
            }
            let t_of = |o: usize| o * p.stride + w - left;
            let taps = &kernel[w * ci_n * co..(w + 1) * ci_n * co];
            let mut ks = taps.chunks_exact(4 * co);
            for (b, k4) in (&mut ks).enumerate() {
                let ci = 4 * b;
                let k4 = divide_into(&mut scratch, k4, divisor);
                let (k0, rest) = k4.split_at(co);
                let (k1, rest) = rest.split_at(co);
                let (k2, k3) = rest.split_at(co);
                for o in rows.clone() {
                    let x4 = &input.row(t_of(o))[ci..ci + 4];
                    let dst = out.row_mut(o);
                    if x4.contains(&0.0) {
                        for (&xv, k) in x4.iter().zip([k0, k1, k2, k3]) {
                            axpy_nonzero(dst, xv, k);
                        }
                        continue;
                    }
                    let (x0, x1, x2, x3) = (x4[0], x4[1], x4[2], x4[3]);
                    for ((((d, &a), &b), &c), &e) in dst.iter_mut().zip(k0).zip(k1).zip(k2).zip(k3) {
                        let mut acc = *d;
                        acc += x0 * a;
                        acc += x1 * b;
                        acc += x2 * c;
                        acc += x3 * e;
                        *d = acc;
                    }
                }
            }
            let first = ci_n - ci_n % 4;
            for (j, k) in ks.remainder().chunks_exact(co).enumerate() {
                let k = divide_into(&mut scratch, k, divisor);
                for o in rows.clone() {
                    let xv = input.row(t_of(o))[first + j];
                    axpy_nonzero(out.row_mut(o), xv, k);
                }
            }
        }
    }
    Ok(out)
}

/// `k` itself, or `k / divisor` written into the front of `scratch`.
fn divide_into<'a>(scratch: &'a mut [f64], k: &'a [f64], divisor: Option<f64>) -> &'a [f64] {
    match divisor {
        None => k,
        Some(s) => {
            let dst = &mut scratch[..k.len()];
            for (d, &w) in dst.iter_mut().zip(k) {
                *d = w / s;
            }
            dst
        }
    }
}

/// Output rows kept hot while a kernel tap is swept across them.
const CONV_TILE_BYTES: usize = 64 * 1024;

/// `dst += x·k`, skipped entirely when `x` is zero.
#[inline]
fn axpy_nonzero(dst: &mut [f64], x: f64, k: &[f64]) {
    if x == 0.0 {
        return;
    }
    for (d, &kv) in dst.iter_mut().zip(k) {
        *d += x * kv;
    }
}

pub fn conv1d_backward(input: &FeatureMap, p: &ConvParams, grad_out: &FeatureMap) -> Result<ConvGrads> {
    conv1d_backward_with_kernel(input, p, &p.kernel, grad_out)
}

pub fn conv1d_backward_with_kernel(
    input: &FeatureMap,
    p: &ConvParams,
    kernel: &[f64],
    grad_out: &FeatureMap,
) -> Result<ConvGrads> {
    p.check_input(input)?;
    let n = input.len();
    let (out_len, left) = same_padding(n, p.stride, p.width);
    if grad_out.shape() != (out_len, p.out_channels) {
        return Err(Error::ShapeMismatch(format!(
            "conv gradient has shape {:?}, expected {:?}",
            grad_out.shape(),
            (out_len, p.out_channels)
        )));
    }
    let mut g_kernel = vec![0.0; kernel.len()];
    let mut g_bias = vec![0.0; p.out_channels];
    let mut g_input = FeatureMap::zeros(n, p.in_channels);
    for o in 0..out_len {
        let base = (o * p.stride) as isize - left as isize;
        let dy = grad_out.row(o);
        for (b, &g) in g_bias.iter_mut().zip(dy) {
            *b += g;
        }
        for w in p.valid_taps(base, n) {
            let t = (base + w as isize) as usize;
            let x = input.row(t);
            let dx = g_input.row_mut(t);
            for ci in 0..p.in_channels {
                let r = p.krow(kernel, w, ci);
                let k = &kernel[r.clone()];
                dx[ci] += k.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
                let xv = x[ci];
                if xv != 0.0 {
                    for (gk, &g) in g_kernel[r].iter_mut().zip(dy) {
                        *gk += xv * g;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        kernel: g_kernel,
        bias: g_bias,
        input: g_input,
    })
}

/// Transposed convolution producing `input.len() · stride` samples.
pub fn deconv1d(input: &FeatureMap, p: &ConvParams) -> Result<FeatureMap> {
    deconv1d_to(input, p, &p.kernel, input.len() * p.stride)
}

fn check_deconv_len(input: &FeatureMap, p: &ConvParams, out_len: usize) -> Result<usize> {
    p.check_input(input)?;
    let (expect, left) = same_padding(out_len, p.stride, p.width);
    if expect != input.len() {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv cannot map {} steps to {out_len} at stride {}",
            input.len(),
            p.stride
        )));
    }
    Ok(left)
}

/// Transposed convolution producing `out_len` samples, the exact adjoint of
/// a convolution from `out_len` samples down to `input.len()`. Requires
/// `ceil(out_len / stride) == input.len()`.
pub fn deconv1d_to(input: &FeatureMap, p: &ConvParams, kernel: &[f64], out_len: usize) -> Result<FeatureMap> {
    let left = check_deconv_len(input, p, out_len)?;
    let mut out = FeatureMap::zeros(out_len, p.out_channels);
    for t in 0..out_len {
        out.row_mut(t).copy_from_slice(&p.bias);
    }
    for o in 0..input.len() {
        let base = (o * p.stride) as isize - left as isize;
        let y = input.row(o);
        for w in p.valid_taps(base, out_len) {
            let dst = out.row_mut((base + w as isize) as usize);
            for (ci, &yv) in y.iter().enumerate() {
                if yv == 0.0 {
                    continue;
                }
                let k = &kernel[p.krow(kernel, w, ci)];
                for (d, &kv) in dst.iter_mut().zip(k) {
                    *d += yv * kv;
                }
            }
        }
    }
    Ok(out)
}

pub fn deconv1d_backward(
    input: &FeatureMap,
    p: &ConvParams,
    kernel: &[f64],
    grad_out: &FeatureMap,
) -> Result<ConvGrads> {
    let out_len = grad_out.len();
    let left = check_deconv_len(input, p, out_len)?;
    if grad_out.channels() != p.out_channels {
        return Err(Error::ShapeMismatch(format!(
            "transposed conv gradient has {} channels, expected {}",
            grad_out.channels(),
            p.out_channels
        )));
    }
    let mut g_kernel = vec![0.0; kernel.len()];
    let mut g_bias = vec![0.0; p.out_channels];
    let mut g_input = FeatureMap::zeros(input.len(), p.in_channels);
    for t in 0..out_len {
        for (b, &g) in g_bias.iter_mut().zip(grad_out.row(t)) {
            *b += g;
        }
    }
    for o in 0..input.len() {
        let base = (o * p.stride) as isize - left as isize;
        let y = input.row(o);
        let dy = g_input.row_mut(o);
        for w in p.valid_taps(base, out_len) {
            let g = grad_out.row((base + w as isize) as usize);
            for ci in 0..p.in_channels {
                let r = p.krow(kernel, w, ci);
                dy[ci] += kernel[r.clone()].iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                let yv = y[ci];
                if yv != 0.0 {
                    for (gk, &gv) in g_kernel[r].iter_mut().zip(g) {
                        *gk += yv * gv;
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        kernel: g_kernel,
        bias: g_bias,
        input: g_input,
    })
}
