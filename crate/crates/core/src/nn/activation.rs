use super::tensor::FeatureMap;
use crate::error::{Error, Result};

/// Slope used by the discriminator's leaky units.
pub const LEAKY_SLOPE: f64 = 0.3;

/// Initial PReLU slope.
pub const PRELU_INIT: f64 = 0.25;

pub fn prelu(input: &FeatureMap, alpha: &[f64]) -> Result<FeatureMap> {
    if alpha.len() != input.channels() {
        return Err(Error::ShapeMismatch(format!(
            "prelu has {} slopes for {} channels",
            alpha.len(),
            input.channels()
        )));
    }
    let mut out = input.clone();
    for t in 0..out.len() {
        for (v, &a) in out.row_mut(t).iter_mut().zip(alpha) {
            if *v < 0.0 {
                *v *= a;
            }
        }
    }
    Ok(out)
}

/// Returns (input gradient, slope gradient).
pub fn prelu_backward(input: &FeatureMap, alpha: &[f64], grad_out: &FeatureMap) -> (FeatureMap, Vec<f64>) {
    let mut g_in = grad_out.clone();
    let mut g_alpha = vec![0.0; alpha.len()];
    for t in 0..input.len() {
        let x = input.row(t);
        for (c, g) in g_in.row_mut(t).iter_mut().enumerate() {
            if x[c] < 0.0 {
                g_alpha[c] += *g * x[c];
                *g *= alpha[c];
            }
        }
    }
    (g_in, g_alpha)
}

pub fn leaky_relu(input: &FeatureMap, alpha: f64) -> FeatureMap {
    input.map(|x| if x >= 0.0 { x } else { alpha * x })
}

pub fn leaky_relu_backward(input: &FeatureMap, alpha: f64, grad_out: &FeatureMap) -> FeatureMap {
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x < 0.0 {
            *gv *= alpha;
        }
    }
    g
}

pub fn tanh(input: &FeatureMap) -> FeatureMap {
    input.map(f64::tanh)
}

/// Gradient through tanh given its output.
pub fn tanh_backward(output: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= 1.0 - y * y;
    }
    g
}

/// Row-wise softmax, shifted by the row maximum.
pub fn softmax_rows(input: &FeatureMap) -> FeatureMap {
    let mut out = input.clone();
    for t in 0..out.len() {
        let row = out.row_mut(t);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Gradient through softmax given its output.
pub fn softmax_rows_backward(output: &FeatureMap, grad_out: &FeatureMap) -> FeatureMap {
    let mut g = FeatureMap::zeros(output.len(), output.channels());
    for t in 0..output.len() {
        let a = output.row(t);
        let d = grad_out.row(t);
        let inner: f64 = a.iter().zip(d).map(|(x, y)| x * y).sum();
        for ((dst, &av), &dv) in g.row_mut(t).iter_mut().zip(a).zip(d) {
            *dst = av * (dv - inner);
        }
    }
    g
}
