use crate::error::{Error, Result};

/// Dense `len × channels` array stored time-major (row `t` holds all channels
/// at time step `t`). Also used for plain matrices such as attention maps.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    len: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(len: usize, channels: usize) -> Self {
        Self {
            len,
            channels,
            data: vec![0.0; len * channels],
        }
    }

    pub fn from_vec(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot form a {len}x{channels} map",
                data.len()
            )));
        }
        Ok(Self {
            len,
            channels,
            data,
        })
    }

    /// Single-channel map holding a waveform.
    pub fn from_signal(samples: &[f64]) -> Self {
        Self {
            len: samples.len(),
            channels: 1,
            data: samples.to_vec(),
        }
    }

    /// Two-channel map with `a` in channel 0 and `b` in channel 1.
    pub fn from_pair(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::ShapeMismatch(format!(
                "paired signals differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let data = a.iter().zip(b).flat_map(|(&x, &y)| [x, y]).collect();
        Ok(Self {
            len: a.len(),
            channels: 2,
            data,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.len, self.channels)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, v: f64) {
        self.data[t * self.channels + c] = v;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    #[inline]
    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// Copy of one channel as a time series.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.at(t, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            len: self.len,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Inner product over all entries.
    pub fn dot(&self, other: &FeatureMap) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Stack `other`'s channels after `self`'s at every time step.
    pub fn concat_channels(&self, other: &FeatureMap) -> Result<FeatureMap> {
        if self.len != other.len {
            return Err(Error::ShapeMismatch(format!(
                "cannot concatenate maps of length {} and {}",
                self.len, other.len
            )));
        }
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.len * channels);
        for t in 0..self.len {
            data.extend_from_slice(self.row(t));
            data.extend_from_slice(other.row(t));
        }
        Ok(FeatureMap {
            len: self.len,
            channels,
            data,
        })
    }

    /// Inverse of [`concat_channels`](Self::concat_channels).
    pub fn split_channels(&self, at: usize) -> (FeatureMap, FeatureMap) {
        assert!(at <= self.channels);
        let mut left = FeatureMap::zeros(self.len, at);
        let mut right = FeatureMap::zeros(self.len, self.channels - at);
        for t in 0..self.len {
            let row = self.row(t);
            left.row_mut(t).copy_from_slice(&row[..at]);
            right.row_mut(t).copy_from_slice(&row[at..]);
        }
        (left, right)
    }

    pub fn transpose(&self) -> FeatureMap {
        let mut out = FeatureMap::zeros(self.channels, self.len);
        for t in 0..self.len {
            for c in 0..self.channels {
                out.set(c, t, self.at(t, c));
            }
        }
        out
    }

    /// Matrix product `self · rhs` where `rhs` is `channels × cols` row-major.
    pub fn matmul(&self, rhs: &[f64], cols: usize) -> FeatureMap {
        debug_assert_eq!(rhs.len(), self.channels * cols);
        let mut out = FeatureMap::zeros(self.len, cols);
        for t in 0..self.len {
            let dst = &mut out.data[t * cols..(t + 1) * cols];
            for (c, &x) in self.row(t).iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let w = &rhs[c * cols..(c + 1) * cols];
                for (d, &wv) in dst.iter_mut().zip(w) {
                    *d += x * wv;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`, with `rhs` also a map sharing the channel count.
    pub fn matmul_transposed(&self, rhs: &FeatureMap) -> FeatureMap {
        debug_assert_eq!(self.channels, rhs.channels);
        let mut out = FeatureMap::zeros(self.len, rhs.len);
        for i in 0..self.len {
            let a = self.row(i);
            for j in 0..rhs.len {
                let b = rhs.row(j);
                out.data[i * rhs.len + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `selfᵀ · rhs`, both maps sharing the time length. Result is
    /// `self.channels × rhs.channels` row-major.
    pub fn transposed_matmul(&self, rhs: &FeatureMap) -> Vec<f64> {
        debug_assert_eq!(self.len, rhs.len);
        let (m, n) = (self.channels, rhs.channels);
        let mut out = vec![0.0; m * n];
        for t in 0..self.len {
            let a = self.row(t);
            let b = rhs.row(t);
            for (i, &av) in a.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let dst = &mut out[i * n..(i + 1) * n];
                for (d, &bv) in dst.iter_mut().zip(b) {
                    *d += av * bv;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ` where `rhs` is `cols × channels` row-major.
    pub fn matmul_by_transpose_of(&self, rhs: &[f64], cols: usize) -> FeatureMap {
        debug_assert_eq!(rhs.len(), self.channels * cols);
        let mut out = FeatureMap::zeros(self.len, cols);
        for t in 0..self.len {
            let a = self.row(t);
            for j in 0..cols {
                let w = &rhs[j * self.channels..(j + 1) * self.channels];
                out.data[t * cols + j] = a.iter().zip(w).map(|(x, y)| x * y).sum();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_restores_both_halves() {
        let a = FeatureMap::from_vec(3, 2, (0..6).map(f64::from).collect()).unwrap();
        let b = FeatureMap::from_vec(3, 1, vec![10.0, 11.0, 12.0]).unwrap();
        let ab = a.concat_channels(&b).unwrap();
        assert_eq!(ab.row(1), &[2.0, 3.0, 11.0]);
        let (l, r) = ab.split_channels(2);
        assert_eq!(l, a);
        assert_eq!(r, b);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = FeatureMap::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        // 3x2
        let w = [1.0, 0.5, -1.0, 2.0, 0.0, 1.0];
        let p = a.matmul(&w, 2);
        assert_eq!(p.data(), &[-1.0, 7.5, -1.0, 18.0]);
        // wᵀ laid out as 2x3
        let wt = [1.0, -1.0, 0.0, 0.5, 2.0, 1.0];
        assert_eq!(a.matmul_by_transpose_of(&wt, 2), p);
        let g = a.transposed_matmul(&a);
        assert_eq!(g[0], 17.0);
        assert_eq!(g[8], 45.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FeatureMap::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(FeatureMap::from_pair(&[0.0], &[0.0, 1.0]).is_err());
    }
}
