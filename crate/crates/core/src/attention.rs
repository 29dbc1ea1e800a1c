//! Non-local self-attention over the time axis of a feature map.
//!
//! For an `L × C` map `F`, 1×1 projections reduce channels by `k`:
//! `Q = F·W_Q`, and keys/values are projected then max-pooled over time by
//! `p`, giving `K̄, V̄` of `ceil(L/p) × C/k`. The attention map is
//! `A = softmax_rows(Q·K̄ᵀ)` (no temperature), the attentive output
//! `O = (A·V̄)·W_O`, and the layer returns `β·O + F`.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::activation::{softmax_rows, softmax_rows_backward};
use crate::nn::init::glorot_uniform;
use crate::nn::pool::{maxpool1d_backward, maxpool1d_with_indices};
use crate::nn::FeatureMap;

pub const DEFAULT_K: usize = 8;
pub const DEFAULT_P: usize = 4;

/// Number of (de)convolutional layers the footprint model covers.
pub const MAX_LAYER: usize = 11;

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub channels: usize,
    pub k: usize,
    pub p: usize,
    /// `C × C/k`, row-major.
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    /// `C/k × C`, row-major.
    pub w_o: Vec<f64>,
    pub beta: f64,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput {
    pub f_tilde: FeatureMap,
    /// `L × ceil(L/p)`; row `i` is the distribution over pooled keys for
    /// output step `i`.
    pub attn_map: FeatureMap,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    q: FeatureMap,
    k_pool: FeatureMap,
    v_pool: FeatureMap,
    k_idx: Vec<usize>,
    v_idx: Vec<usize>,
    attn: FeatureMap,
    h: FeatureMap,
    o: FeatureMap,
}

#[derive(Clone, Debug)]
pub struct AttentionGrads {
    pub w_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub w_o: Vec<f64>,
    pub beta: f64,
    pub input: FeatureMap,
}

impl AttentionParams {
    pub fn zeros(channels: usize, k: usize, p: usize) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::InvalidConfig("attention needs k >= 1 and p >= 1".into()));
        }
        if channels == 0 || !channels.is_multiple_of(k) {
            return Err(Error::IndivisibleChannels { channels, k });
        }
        let d = channels / k;
        Ok(Self {
            channels,
            k,
            p,
            w_q: vec![0.0; channels * d],
            w_k: vec![0.0; channels * d],
            w_v: vec![0.0; channels * d],
            w_o: vec![0.0; d * channels],
            beta: 0.0,
        })
    }

    /// Width of the reduced query/key/value space.
    pub fn proj_width(&self) -> usize {
        self.channels / self.k
    }

    pub fn param_count(&self) -> usize {
        self.w_q.len() + self.w_k.len() + self.w_v.len() + self.w_o.len() + 1
    }
}

/// Glorot-initialized projections and `β = 0`, so the layer starts as the
/// identity.
pub fn attn_init<R: Rng + ?Sized>(channels: usize, k: usize, p: usize, rng: &mut R) -> Result<AttentionParams> {
    let mut a = AttentionParams::zeros(channels, k, p)?;
    let d = a.proj_width();
    glorot_uniform(&mut a.w_q, channels, d, rng);
    glorot_uniform(&mut a.w_k, channels, d, rng);
    glorot_uniform(&mut a.w_v, channels, d, rng);
    glorot_uniform(&mut a.w_o, d, channels, rng);
    Ok(a)
}

pub fn attn_forward(f: &FeatureMap, params: &AttentionParams) -> Result<AttentionOutput> {
    attn_forward_cached(f, params).map(|(out, _)| out)
}

pub fn attn_forward_cached(f: &FeatureMap, params: &AttentionParams) -> Result<(AttentionOutput, AttentionCache)> {
    if f.channels() != params.channels {
        return Err(Error::ShapeMismatch(format!(
            "attention over {} channels applied to {}",
            params.channels,
            f.channels()
        )));
    }
    let d = params.proj_width();
    let q = f.matmul(&params.w_q, d);
    let (k_pool, k_idx) = maxpool1d_with_indices(&f.matmul(&params.w_k, d), params.p)?;
    let (v_pool, v_idx) = maxpool1d_with_indices(&f.matmul(&params.w_v, d), params.p)?;
    let attn = softmax_rows(&q.matmul_transposed(&k_pool));
    let h = attn.matmul(v_pool.data(), d);
    let o = h.matmul(&params.w_o, params.channels);
    let mut f_tilde = f.clone();
    if params.beta != 0.0 {
        for (y, &ov) in f_tilde.data_mut().iter_mut().zip(o.data()) {
            *y += params.beta * ov;
        }
    }
    let out = AttentionOutput {
        f_tilde,
        attn_map: attn.clone(),
    };
    Ok((
        out,
        AttentionCache {
            q,
            k_pool,
            v_pool,
            k_idx,
            v_idx,
            attn,
            h,
            o,
        },
    ))
}

pub fn attn_backward(f: &FeatureMap, params: &AttentionParams, cache: &AttentionCache, grad: &FeatureMap) -> AttentionGrads {
    let d = params.proj_width();
    let c = params.channels;
    let beta_grad = grad.dot(&cache.o);
    let d_o = grad.map(|g| g * params.beta);

    let w_o = cache.h.transposed_matmul(&d_o);
    let d_h = d_o.matmul_by_transpose_of(&params.w_o, d);
    // H = A·V̄
    let d_attn = d_h.matmul_transposed(&cache.v_pool);
    let d_vpool = FeatureMap::from_vec(cache.v_pool.len(), d, cache.attn.transposed_matmul(&d_h)).expect("shape");
    let d_scores = softmax_rows_backward(&cache.attn, &d_attn);
    // S = Q·K̄ᵀ
    let d_q = d_scores.matmul(cache.k_pool.data(), d);
    let d_kpool = FeatureMap::from_vec(cache.k_pool.len(), d, d_scores.transposed_matmul(&cache.q)).expect("shape");
    let d_kraw = maxpool1d_backward(&cache.k_idx, f.len(), &d_kpool);
    let d_vraw = maxpool1d_backward(&cache.v_idx, f.len(), &d_vpool);

    let w_q = f.transposed_matmul(&d_q);
    let w_k = f.transposed_matmul(&d_kraw);
    let w_v = f.transposed_matmul(&d_vraw);

    let mut input = grad.clone();
    input.add_assign(&d_q.matmul_by_transpose_of(&params.w_q, c));
    input.add_assign(&d_kraw.matmul_by_transpose_of(&params.w_k, c));
    input.add_assign(&d_vraw.matmul_by_transpose_of(&params.w_v, c));

    AttentionGrads {
        w_q,
        w_k,
        w_v,
        w_o,
        beta: beta_grad,
        input,
    }
}

/// Attention memory at one layer of the encoder ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Footprint {
    pub layer: usize,
    pub time_dim: usize,
    /// Entries of an unpooled `time_dim × time_dim` attention map.
    pub raw_map_elems: usize,
    /// Number of keys after pooling.
    pub pooled_keys: usize,
    /// Entries of the pooled `time_dim × ceil(time_dim/p)` map.
    pub pooled_map_elems: usize,
}

pub fn attn_footprint(input_len: usize, layer: usize, p: usize) -> Result<Footprint> {
    if !(1..=MAX_LAYER).contains(&layer) {
        return Err(Error::OutOfRangeLayer { layer, max: MAX_LAYER });
    }
    if p == 0 {
        return Err(Error::InvalidConfig("pooling factor must be at least 1".into()));
    }
    let time_dim = (0..layer).fold(input_len, |n, _| n.div_ceil(2));
    let pooled_keys = time_dim.div_ceil(p);
    Ok(Footprint {
        layer,
        time_dim,
        raw_map_elems: time_dim * time_dim,
        pooled_keys,
        pooled_map_elems: time_dim * pooled_keys,
    })
}

pub const ATTENTION_DUMP_HEADER: &str = "layer,row_index,key_index,weight";

/// Write selected attention-map rows as `layer,row_index,key_index,weight`.
pub fn write_attention_dump<W: Write>(out: &mut W, layer: usize, attn_map: &FeatureMap, rows: &[usize]) -> Result<()> {
    let io = |e| Error::io("attention dump", e);
    writeln!(out, "{ATTENTION_DUMP_HEADER}").map_err(io)?;
    for &r in rows {
        if r >= attn_map.len() {
            return Err(Error::InvalidConfig(format!(
                "row {r} outside attention map with {} rows",
                attn_map.len()
            )));
        }
        for (j, w) in attn_map.row(r).iter().enumerate() {
            writeln!(out, "{layer},{r},{j},{w}").map_err(io)?;
        }
    }
    Ok(())
}
