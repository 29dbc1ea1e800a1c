use super::tensor::FeatureMap;
use crate::error::{Error, Result};

/// Non-overlapping max pooling over time with window and stride `p`. The
/// final window may be shorter. Returns the pooled map and, per output
/// entry, the source time index of the maximum (first one on ties).
pub fn maxpool1d_with_indices(input: &FeatureMap, p: usize) -> Result<(FeatureMap, Vec<usize>)> {
    if p == 0 {
        return Err(Error::InvalidConfig("pooling factor must be at least 1".into()));
    }
    let c = input.channels();
    let out_len = input.len().div_ceil(p);
    let mut out = FeatureMap::zeros(out_len, c);
    let mut arg = vec![0usize; out_len * c];
    for o in 0..out_len {
        let start = o * p;
        let end = (start + p).min(input.len());
        out.row_mut(o).copy_from_slice(input.row(start));
        arg[o * c..(o + 1) * c].fill(start);
        for t in start + 1..end {
            let x = input.row(t);
            let dst = out.row_mut(o);
            for ch in 0..c {
                if x[ch] > dst[ch] {
                    dst[ch] = x[ch];
                    arg[o * c + ch] = t;
                }
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool1d(input: &FeatureMap, p: usize) -> Result<FeatureMap> {
    maxpool1d_with_indices(input, p).map(|(m, _)| m)
}

/// Route pooled gradients back to the winning time steps.
pub fn maxpool1d_backward(indices: &[usize], in_len: usize, grad_out: &FeatureMap) -> FeatureMap {
    let c = grad_out.channels();
    let mut g = FeatureMap::zeros(in_len, c);
    for o in 0..grad_out.len() {
        for ch in 0..c {
            let t = indices[o * c + ch];
            let v = g.at(t, ch) + grad_out.at(o, ch);
            g.set(t, ch, v);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use proptest::prelude::*;

    fn scan(x: &FeatureMap, p: usize) -> FeatureMap {
        let n = (x.len() + p - 1) / p;
        let mut out = FeatureMap::zeros(n, x.channels());
        for o in 0..n {
            for c in 0..x.channels() {
                let mut m = f64::NEG_INFINITY;
                let mut t = o * p;
                while t < x.len() && t < o * p + p {
                    m = m.max(x.at(t, c));
                    t += 1;
                }
                out.set(o, c, m);
            }
        }
        out
    }

    #[test]
    fn lengths_and_identity() {
        let x = FeatureMap::from_vec(8, 1, (0..8).map(f64::from).collect()).unwrap();
        assert_eq!(maxpool1d(&x, 4).unwrap().data(), &[3.0, 7.0]);
        assert_eq!(maxpool1d(&x, 1).unwrap(), x);
        assert_eq!(maxpool1d(&x, 3).unwrap().data(), &[2.0, 5.0, 7.0]);
        assert!(maxpool1d(&x, 0).is_err());
    }

    #[test]
    fn gradient_routes_to_argmax() {
        let x = FeatureMap::from_vec(5, 2, vec![0.3, -1.0, 0.9, 0.2, -0.4, 0.8, 0.1, 0.05, 0.6, -0.3]).unwrap();
        let r = FeatureMap::from_vec(2, 2, vec![1.5, -0.5, 2.0, 0.25]).unwrap();
        let (_, idx) = maxpool1d_with_indices(&x, 3).unwrap();
        let g = maxpool1d_backward(&idx, 5, &r);
        let err = grad_check(
            |v| maxpool1d(&FeatureMap::from_vec(5, 2, v.to_vec()).unwrap(), 3).unwrap().dot(&r),
            x.data(),
            g.data(),
            1e-5,
        );
        assert!(err < 1e-8);
    }

    proptest! {
        #[test]
        fn equals_brute_force_scan(
            len in 1usize..=64,
            p in 1usize..=8,
            ch in 1usize..=3,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = FeatureMap::from_vec(len, ch, (0..len * ch).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            prop_assert_eq!(maxpool1d(&x, p).unwrap(), scan(&x, p));
        }
    }
}
