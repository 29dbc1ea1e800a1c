use rand::Rng;

/// Fill `w` with zero-mean uniform values of half-width √(6/(fan_in+fan_out)).
pub fn glorot_uniform<R: Rng + ?Sized>(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let scale = limit - -limit;
    // Same draws as `rng.random_range(-limit..limit)` per element, but
    // pulled from the generator in blocks: the full-size model has ~73M
    // weights and the per-call path dominated build time.
    const BLOCK: usize = 1024;
    let mut bytes = [0u8; 8 * BLOCK];
    for chunk in w.chunks_mut(BLOCK) {
        let bytes = &mut bytes[..8 * chunk.len()];
        rng.fill_bytes(bytes);
        for (v, b) in chunk.iter_mut().zip(bytes.chunks_exact(8)) {
            let bits = u64::from_le_bytes(b.try_into().expect("8 bytes"));
            let unit = f64::from_bits((bits >> 12) | ONE_BITS) - 1.0;
            *v = unit * scale + -limit;
        }
    }
}

/// Exponent bits of 1.0; with 52 random mantissa bits this is uniform in [1, 2).
const ONE_BITS: u64 = 0x3FF0_0000_0000_0000;

/// Random unit vector (Gaussian direction).
pub fn unit_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
