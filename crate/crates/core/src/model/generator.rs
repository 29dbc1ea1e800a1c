//! Encoder–decoder generator with skip connections.
//!
//! Every (de)convolution kernel is spectrally normalized with its own
//! persisted power-iteration vector, exactly as in the discriminator.
//! Encoder layer `i` is a strided convolution followed by PReLU and, if
//! configured, self-attention; its output `E_i` is kept for the skip path.
//! The latent is concatenated channel-wise onto `E_11`. Decoder layer `l`
//! (run from 11 down to 1) is a transposed convolution producing the shape
//! of `E_{l−1}`, then PReLU and optional attention, and the result is
//! concatenated with `E_{l−1}` before the next decoder layer. The last
//! decoder layer emits one channel through tanh.

use rand::Rng;

use super::config::ModelConfig;
use super::{Latent, Parameters};
use crate::attention::{attn_backward, attn_forward_cached, attn_init, AttentionCache, AttentionParams};
use crate::error::{Error, Result};
use crate::nn::activation::{prelu_backward, tanh, tanh_backward};
use crate::nn::conv::{conv1d_backward_with_kernel, conv1d_divided_kernel, conv1d_with_kernel, deconv1d_backward, deconv1d_to};
use crate::nn::spectral::{estimate_or_zero, sigma_or_one, spectral_backward};
use crate::nn::{prelu, ConvParams, FeatureMap, SpectralNorm, SpectralState, PRELU_INIT};
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub conv: ConvParams,
    pub sn: SpectralState,
    pub alpha: Vec<f64>,
    pub attn: Option<AttentionParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderLayer {
    pub deconv: ConvParams,
    pub sn: SpectralState,
    /// PReLU slopes; empty on the output layer.
    pub alpha: Vec<f64>,
    pub attn: Option<AttentionParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    cfg: ModelConfig,
    /// `encoder[i − 1]` is encoder layer `i`.
    pub encoder: Vec<EncoderLayer>,
    /// `decoder[l − 1]` is decoder layer `l`.
    pub decoder: Vec<DecoderLayer>,
}

#[derive(Clone, Debug)]
struct StageCache {
    input: FeatureMap,
    pre: FeatureMap,
    act: FeatureMap,
    attn: Option<AttentionCache>,
}

/// Intermediate values of one forward pass, consumed by the backward pass.
#[derive(Clone, Debug)]
pub struct GenCache {
    enc: Vec<StageCache>,
    dec: Vec<StageCache>,
    output: FeatureMap,
}

/// Normalized kernels of every layer for the current power-iteration state.
struct Kernels {
    enc: Vec<SpectralNorm>,
    dec: Vec<SpectralNorm>,
}

/// Apply optional attention, returning its cache and the layer output.
fn attend(act: &FeatureMap, attn: Option<&AttentionParams>) -> Result<(Option<AttentionCache>, FeatureMap)> {
    match attn {
        Some(a) => {
            let (out, cache) = attn_forward_cached(act, a)?;
            Ok((Some(cache), out.f_tilde))
        }
        None => Ok((None, act.clone())),
    }
}

pub(super) fn visit_attn(prefix: &str, a: &AttentionParams, f: &mut dyn FnMut(&str, &[f64])) {
    f(&format!("{prefix}.attn.w_q"), &a.w_q);
    f(&format!("{prefix}.attn.w_k"), &a.w_k);
    f(&format!("{prefix}.attn.w_v"), &a.w_v);
    f(&format!("{prefix}.attn.w_o"), &a.w_o);
    f(&format!("{prefix}.attn.beta"), std::slice::from_ref(&a.beta));
}

pub(super) fn visit_attn_mut(prefix: &str, a: &mut AttentionParams, f: &mut dyn FnMut(&str, &mut [f64])) {
    f(&format!("{prefix}.attn.w_q"), &mut a.w_q);
    f(&format!("{prefix}.attn.w_k"), &mut a.w_k);
    f(&format!("{prefix}.attn.w_v"), &mut a.w_v);
    f(&format!("{prefix}.attn.w_o"), &mut a.w_o);
    f(&format!("{prefix}.attn.beta"), std::slice::from_mut(&mut a.beta));
}

pub(super) fn attn_grads_into(dst: &mut AttentionParams, g: &crate::attention::AttentionGrads) {
    dst.w_q = g.w_q.clone();
    dst.w_k = g.w_k.clone();
    dst.w_v = g.w_v.clone();
    dst.w_o = g.w_o.clone();
    dst.beta = g.beta;
}

impl Generator {
    /// Glorot-initialized generator drawing from the init stream of `seed`.
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Self::init(cfg, &mut stream(seed, Stream::Init))
    }

    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let depth = cfg.depth();
        let (w, s) = (cfg.filter_width, cfg.stride);
        let mut encoder = Vec::with_capacity(depth);
        for i in 1..=depth {
            let c = cfg.channels(i);
            let conv = ConvParams::init(w, s, cfg.channels(i - 1), c, rng)?;
            let sn = SpectralState::new(c, rng);
            let attn = if cfg.attention_layers.contains(&i) {
                Some(attn_init(c, cfg.k, cfg.p, rng)?)
            } else {
                None
            };
            encoder.push(EncoderLayer {
                conv,
                sn,
                alpha: vec![PRELU_INIT; c],
                attn,
            });
        }
        let mut decoder = Vec::with_capacity(depth);
        for l in 1..=depth {
            let out = cfg.channels(l - 1);
            let deconv = ConvParams::init(w, s, 2 * cfg.channels(l), out, rng)?;
            let sn = SpectralState::new(out, rng);
            let attn = if cfg.decoder_attention(l) {
                Some(attn_init(out, cfg.k, cfg.p, rng)?)
            } else {
                None
            };
            decoder.push(DecoderLayer {
                deconv,
                sn,
                alpha: if l == 1 { Vec::new() } else { vec![PRELU_INIT; out] },
                attn,
            });
        }
        Ok(Self { cfg: cfg.clone(), encoder, decoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// One power-iteration step on every kernel. All-zero kernels are
    /// left alone.
    pub fn spectral_step(&mut self) -> Result<()> {
        let enc = self.encoder.iter_mut().map(|l| (&mut l.sn, &l.conv.kernel));
        let dec = self.decoder.iter_mut().map(|l| (&mut l.sn, &l.deconv.kernel));
        for (sn, kernel) in enc.chain(dec) {
            if kernel.iter().any(|&w| w != 0.0) {
                sn.power_step(kernel)?;
            }
        }
        Ok(())
    }

    fn encoder_kernel(&self, i: usize) -> Result<SpectralNorm> {
        let l = &self.encoder[i - 1];
        estimate_or_zero(&l.conv.kernel, l.conv.out_channels, &l.sn)
    }

    fn kernels(&self) -> Result<Kernels> {
        Ok(Kernels {
            enc: (1..=self.cfg.depth()).map(|i| self.encoder_kernel(i)).collect::<Result<_>>()?,
            dec: self
                .decoder
                .iter()
                .map(|l| estimate_or_zero(&l.deconv.kernel, l.deconv.out_channels, &l.sn))
                .collect::<Result<_>>()?,
        })
    }

    /// Non-trainable state: the persisted power-iteration vectors.
    pub fn visit_state(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.encoder.iter().enumerate() {
            f(&format!("g.enc.{}.sn_u", i + 1), l.sn.u());
        }
        for (i, l) in self.decoder.iter().enumerate().rev() {
            f(&format!("g.dec.{}.sn_u", i + 1), l.sn.u());
        }
    }

    pub fn visit_state_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.encoder.iter_mut().enumerate() {
            f(&format!("g.enc.{}.sn_u", i + 1), l.sn.u_mut());
        }
        for (i, l) in self.decoder.iter_mut().enumerate().rev() {
            f(&format!("g.dec.{}.sn_u", i + 1), l.sn.u_mut());
        }
    }

    fn check_input(&self, noisy: &[f64], z: &Latent) -> Result<()> {
        if noisy.len() != self.cfg.window() {
            return Err(Error::ShapeMismatch(format!(
                "generator expects {} samples, got {}",
                self.cfg.window(),
                noisy.len()
            )));
        }
        if z.z.shape() != self.cfg.latent_shape() {
            return Err(Error::ShapeMismatch(format!(
                "latent has shape {:?}, expected {:?}",
                z.z.shape(),
                self.cfg.latent_shape()
            )));
        }
        Ok(())
    }

    fn encode_layer(&self, i: usize, kernel: &[f64], input: FeatureMap) -> Result<(StageCache, FeatureMap)> {
        let pre = conv1d_with_kernel(&input, &self.encoder[i - 1].conv, kernel)?;
        self.finish_encode(i, input, pre)
    }

    /// Inference-only encoder layer: normalizes the kernel on the fly,
    /// with the same result as [`Self::encode_layer`].
    fn encode_layer_lean(&self, i: usize, input: FeatureMap) -> Result<(StageCache, FeatureMap)> {
        let layer = &self.encoder[i - 1];
        let sigma = sigma_or_one(&layer.conv.kernel, layer.conv.out_channels, &layer.sn)?;
        let pre = conv1d_divided_kernel(&input, &layer.conv, &layer.conv.kernel, sigma)?;
        self.finish_encode(i, input, pre)
    }

    fn finish_encode(&self, i: usize, input: FeatureMap, pre: FeatureMap) -> Result<(StageCache, FeatureMap)> {
        let layer = &self.encoder[i - 1];
        let act = prelu(&pre, &layer.alpha)?;
        let (attn, out) = attend(&act, layer.attn.as_ref())?;
        Ok((StageCache { input, pre, act, attn }, out))
    }

    /// Encoder outputs `E_1 … E_11` for one segment.
    pub fn encoder_maps(&self, noisy: &[f64]) -> Result<Vec<FeatureMap>> {
        let mut maps = Vec::with_capacity(self.cfg.depth());
        let mut h = FeatureMap::from_signal(noisy);
        for i in 1..=self.cfg.depth() {
            h = self.encode_layer_lean(i, h)?.1;
            maps.push(h.clone());
        }
        Ok(maps)
    }

    /// Attention map of encoder layer `layer` for one segment.
    pub fn encoder_attention_map(&self, noisy: &[f64], layer: usize) -> Result<FeatureMap> {
        if !(1..=self.cfg.depth()).contains(&layer) {
            return Err(Error::OutOfRangeLayer {
                layer,
                max: self.cfg.depth(),
            });
        }
        let Some(params) = &self.encoder[layer - 1].attn else {
            return Err(Error::InvalidConfig(format!("encoder layer {layer} has no attention")));
        };
        let mut h = FeatureMap::from_signal(noisy);
        for i in 1..layer {
            h = self.encode_layer_lean(i, h)?.1;
        }
        let (stage, _) = self.encode_layer_lean(layer, h)?;
        Ok(crate::attention::attn_forward(&stage.act, params)?.attn_map)
    }

    pub fn forward(&self, noisy: &[f64], z: &Latent) -> Result<Vec<f64>> {
        self.forward_cached(noisy, z).map(|(y, _)| y)
    }

    pub fn forward_cached(&self, noisy: &[f64], z: &Latent) -> Result<(Vec<f64>, GenCache)> {
        self.check_input(noisy, z)?;
        let k = self.kernels()?;
        let depth = self.cfg.depth();
        let mut enc = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        let mut h = FeatureMap::from_signal(noisy);
        for i in 1..=depth {
            let (stage, out) = self.encode_layer(i, &k.enc[i - 1].kernel, h)?;
            h = out.clone();
            skips.push(out);
            enc.push(stage);
        }
        let mut h = skips[depth - 1].concat_channels(&z.z)?;
        let mut dec: Vec<Option<StageCache>> = vec![None; depth];
        let mut output = None;
        for l in (1..=depth).rev() {
            let layer = &self.decoder[l - 1];
            let out_len = self.cfg.time_dim(l - 1);
            let pre = deconv1d_to(&h, &layer.deconv, &k.dec[l - 1].kernel, out_len)?;
            if l == 1 {
                output = Some(tanh(&pre));
                dec[0] = Some(StageCache {
                    input: h,
                    act: pre.clone(),
                    pre,
                    attn: None,
                });
                break;
            }
            let act = prelu(&pre, &layer.alpha)?;
            let (attn, d) = attend(&act, layer.attn.as_ref())?;
            let stage = StageCache { input: h, pre, act, attn };
            h = d.concat_channels(&skips[l - 2])?;
            dec[l - 1] = Some(stage);
        }
        let output = output.expect("decoder reaches layer 1");
        let cache = GenCache {
            enc,
            dec: dec.into_iter().map(|s| s.expect("every decoder layer ran")).collect(),
            output,
        };
        Ok((cache.output.data().to_vec(), cache))
    }

    /// Parameter gradients for `∂loss/∂output = grad_out`.
    pub fn backward(&self, cache: &GenCache, grad_out: &[f64]) -> Result<Generator> {
        let depth = self.cfg.depth();
        if grad_out.len() != cache.output.len() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient has {} samples, expected {}",
                grad_out.len(),
                cache.output.len()
            )));
        }
        let k = self.kernels()?;
        let mut grads = self.zeros_like();
        let mut skip_grads: Vec<Option<FeatureMap>> = vec![None; depth];
        let add_skip = |slot: &mut Option<FeatureMap>, g: FeatureMap| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };

        let mut g = tanh_backward(&cache.output, &FeatureMap::from_signal(grad_out));
        for l in 1..=depth {
            let layer = &self.decoder[l - 1];
            let stage = &cache.dec[l - 1];
            if l > 1 {
                if let (Some(a), Some(ac)) = (&layer.attn, &stage.attn) {
                    let ag = attn_backward(&stage.act, a, ac, &g);
                    attn_grads_into(grads.decoder[l - 1].attn.as_mut().expect("same layout"), &ag);
                    g = ag.input;
                }
                let (gi, ga) = prelu_backward(&stage.pre, &layer.alpha, &g);
                grads.decoder[l - 1].alpha = ga;
                g = gi;
            }
            let sn = &k.dec[l - 1];
            let cg = deconv1d_backward(&stage.input, &layer.deconv, &sn.kernel, &g)?;
            grads.decoder[l - 1].deconv.kernel = spectral_backward(&layer.deconv.kernel, sn, &cg.kernel);
            grads.decoder[l - 1].deconv.bias = cg.bias;
            let half = self.cfg.channels(l);
            let (first, second) = cg.input.split_channels(half);
            if l == depth {
                // input was [E_depth, z]
                add_skip(&mut skip_grads[depth - 1], first);
            } else {
                // input was [d_{l+1}, E_l]
                add_skip(&mut skip_grads[l - 1], second);
                g = first;
            }
        }

        let mut g_next: Option<FeatureMap> = None;
        for i in (1..=depth).rev() {
            let layer = &self.encoder[i - 1];
            let stage = &cache.enc[i - 1];
            let mut g = skip_grads[i - 1].take().expect("every encoder map feeds a skip");
            if let Some(n) = g_next.take() {
                g.add_assign(&n);
            }
            if let (Some(a), Some(ac)) = (&layer.attn, &stage.attn) {
                let ag = attn_backward(&stage.act, a, ac, &g);
                attn_grads_into(grads.encoder[i - 1].attn.as_mut().expect("same layout"), &ag);
                g = ag.input;
            }
            let (gi, ga) = prelu_backward(&stage.pre, &layer.alpha, &g);
            grads.encoder[i - 1].alpha = ga;
            let sn = &k.enc[i - 1];
            let cg = conv1d_backward_with_kernel(&stage.input, &layer.conv, &sn.kernel, &gi)?;
            grads.encoder[i - 1].conv.kernel = spectral_backward(&layer.conv.kernel, sn, &cg.kernel);
            grads.encoder[i - 1].conv.bias = cg.bias;
            if i > 1 {
                g_next = Some(cg.input);
            }
        }
        Ok(grads)
    }
}

impl Parameters for Generator {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, layer) in self.encoder.iter().enumerate() {
            let p = format!("g.enc.{}", i + 1);
            f(&format!("{p}.kernel"), &layer.conv.kernel);
            f(&format!("{p}.bias"), &layer.conv.bias);
            f(&format!("{p}.alpha"), &layer.alpha);
            if let Some(a) = &layer.attn {
                visit_attn(&p, a, f);
            }
        }
        for (i, layer) in self.decoder.iter().enumerate().rev() {
            let p = format!("g.dec.{}", i + 1);
            f(&format!("{p}.kernel"), &layer.deconv.kernel);
            f(&format!("{p}.bias"), &layer.deconv.bias);
            if !layer.alpha.is_empty() {
                f(&format!("{p}.alpha"), &layer.alpha);
            }
            if let Some(a) = &layer.attn {
                visit_attn(&p, a, f);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            let p = format!("g.enc.{}", i + 1);
            f(&format!("{p}.kernel"), &mut layer.conv.kernel);
            f(&format!("{p}.bias"), &mut layer.conv.bias);
            f(&format!("{p}.alpha"), &mut layer.alpha);
            if let Some(a) = &mut layer.attn {
                visit_attn_mut(&p, a, f);
            }
        }
        for (i, layer) in self.decoder.iter_mut().enumerate().rev() {
            let p = format!("g.dec.{}", i + 1);
            f(&format!("{p}.kernel"), &mut layer.deconv.kernel);
            f(&format!("{p}.bias"), &mut layer.deconv.bias);
            if !layer.alpha.is_empty() {
                f(&format!("{p}.alpha"), &mut layer.alpha);
            }
            if let Some(a) = &mut layer.attn {
                visit_attn_mut(&p, a, f);
            }
        }
    }
}
