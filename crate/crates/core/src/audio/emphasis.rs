use super::AudioBuffer;

pub const EMPHASIS_COEF: f64 = 0.95;

/// `y[t] = x[t] − coef·x[t−1]`, with `y[0] = x[0]`.
pub fn preemphasize(buf: &AudioBuffer, coef: f64) -> AudioBuffer {
    let x = buf.samples();
    let mut y = Vec::with_capacity(x.len());
    for (t, &v) in x.iter().enumerate() {
        y.push(if t == 0 { v } else { v - coef * x[t - 1] });
    }
    AudioBuffer::new(y, buf.rate()).expect("filtering keeps samples finite")
}

/// Inverse of [`preemphasize`]: `y[t] = x[t] + coef·y[t−1]`.
pub fn deemphasize(buf: &AudioBuffer, coef: f64) -> AudioBuffer {
    let mut y = Vec::with_capacity(buf.len());
    let mut prev = 0.0;
    for &v in buf.samples() {
        prev = v + coef * prev;
        y.push(prev);
    }
    AudioBuffer::new(y, buf.rate()).expect("filtering keeps samples finite")
}
