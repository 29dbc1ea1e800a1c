//! Pair discriminator.
//!
//! The two signals are stacked as channels (candidate first, noisy second)
//! and pass through the same strided ladder as the generator encoder. Each
//! layer is a spectrally normalized convolution, virtual batch norm with a
//! learned scale and shift, leaky ReLU and optional attention. A
//! spectrally normalized 1×1 convolution reduces the deepest map to a
//! single feature per time step, and a linear head maps those features to
//! an unbounded score.

use rand::Rng;

use super::config::ModelConfig;
use super::generator::{attn_grads_into, visit_attn, visit_attn_mut};
use super::Parameters;
use crate::attention::{attn_backward, attn_forward_cached, attn_init, AttentionCache, AttentionParams};
use crate::error::{Error, Result};
use crate::nn::activation::leaky_relu_backward;
use crate::nn::conv::{conv1d_backward_with_kernel, conv1d_with_kernel};
use crate::nn::init::glorot_uniform;
use crate::nn::spectral::{estimate, spectral_backward};
use crate::nn::vbn::{vbn_backward, vbn_forward, VbnCache};
use crate::nn::{leaky_relu, ConvParams, FeatureMap, SpectralNorm, SpectralState, VbnMode, VbnState, LEAKY_SLOPE};
use crate::rng::{stream, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscLayer {
    pub conv: ConvParams,
    pub sn: SpectralState,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub vbn: VbnState,
    pub attn: Option<AttentionParams>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    cfg: ModelConfig,
    pub layers: Vec<DiscLayer>,
    pub reduce: ConvParams,
    pub reduce_sn: SpectralState,
    pub head_weight: Vec<f64>,
    pub head_bias: f64,
}

/// Discriminator together with its spectrally normalized kernels for the
/// current power-iteration state. Forward and backward passes go through a
/// view so the normalization is computed once per parameter update.
pub struct DiscView<'a> {
    disc: &'a Discriminator,
    kernels: Vec<SpectralNorm>,
    reduce: SpectralNorm,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: FeatureMap,
    conv_out: FeatureMap,
    vbn: VbnCache,
    normed: FeatureMap,
    act: FeatureMap,
    attn: Option<AttentionCache>,
}

#[derive(Clone, Debug)]
pub struct DiscCache {
    layers: Vec<LayerCache>,
    reduce_in: FeatureMap,
    reduced: FeatureMap,
}

impl Discriminator {
    pub fn build(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        Self::init(cfg, &mut stream(seed, Stream::DiscInit))
    }

    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let depth = cfg.depth();
        let mut layers = Vec::with_capacity(depth);
        for i in 1..=depth {
            let c = cfg.channels(i);
            let in_c = if i == 1 { 2 } else { cfg.channels(i - 1) };
            let conv = ConvParams::init(cfg.filter_width, cfg.stride, in_c, c, rng)?;
            let sn = SpectralState::new(c, rng);
            let attn = if cfg.attention_layers.contains(&i) {
                Some(attn_init(c, cfg.k, cfg.p, rng)?)
            } else {
                None
            };
            layers.push(DiscLayer {
                conv,
                sn,
                gamma: vec![1.0; c],
                beta: vec![0.0; c],
                vbn: VbnState::new(c),
                attn,
            });
        }
        let reduce = ConvParams::init(1, 1, cfg.channels(depth), 1, rng)?;
        let reduce_sn = SpectralState::new(1, rng);
        let features = cfg.time_dim(depth);
        let mut head_weight = vec![0.0; features];
        glorot_uniform(&mut head_weight, features, 1, rng);
        Ok(Self {
            cfg: cfg.clone(),
            layers,
            reduce,
            reduce_sn,
            head_weight,
            head_bias: 0.0,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// One power-iteration step on every normalized kernel.
    pub fn spectral_step(&mut self) -> Result<()> {
        for l in &mut self.layers {
            l.sn.power_step(&l.conv.kernel)?;
        }
        self.reduce_sn.power_step(&self.reduce.kernel)
    }

    pub fn view(&self) -> Result<DiscView<'_>> {
        let kernels = self
            .layers
            .iter()
            .map(|l| estimate(&l.conv.kernel, l.conv.out_channels, &l.sn))
            .collect::<Result<_>>()?;
        let reduce = estimate(&self.reduce.kernel, 1, &self.reduce_sn)?;
        Ok(DiscView {
            disc: self,
            kernels,
            reduce,
        })
    }

    /// Recompute every layer's reference statistics from a batch of
    /// `(candidate, noisy)` pairs. Each layer's statistics are taken after
    /// the layers below it have been normalized with their new statistics.
    pub fn set_reference(&mut self, pairs: &[(&[f64], &[f64])]) -> Result<()> {
        if pairs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let kernels: Vec<SpectralNorm> = self.view()?.kernels;
        let mut maps = pairs
            .iter()
            .map(|(a, b)| FeatureMap::from_pair(a, b))
            .collect::<Result<Vec<_>>>()?;
        for (layer, sn) in self.layers.iter_mut().zip(&kernels) {
            let conv: Vec<FeatureMap> = maps
                .iter()
                .map(|x| conv1d_with_kernel(x, &layer.conv, &sn.kernel))
                .collect::<Result<_>>()?;
            layer.vbn = VbnState::from_reference(&conv)?;
            maps = conv
                .iter()
                .map(|y| {
                    let (z, _) = vbn_forward(y, &layer.vbn, &layer.gamma, &layer.beta, VbnMode::Inference)?;
                    let a = leaky_relu(&z, LEAKY_SLOPE);
                    match &layer.attn {
                        Some(p) => Ok(attn_forward_cached(&a, p)?.0.f_tilde),
                        None => Ok(a),
                    }
                })
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    pub fn forward(&self, a: &[f64], b: &[f64], mode: VbnMode) -> Result<f64> {
        self.view()?.forward(a, b, mode)
    }

    /// Non-trainable state: the persisted power-iteration vectors.
    pub fn visit_state(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("d.conv.{}.sn_u", i + 1), l.sn.u());
        }
        f("d.reduce.sn_u", self.reduce_sn.u());
    }

    pub fn visit_state_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(&format!("d.conv.{}.sn_u", i + 1), l.sn.u_mut());
        }
        f("d.reduce.sn_u", self.reduce_sn.u_mut());
    }
}

impl DiscView<'_> {
    pub fn forward(&self, a: &[f64], b: &[f64], mode: VbnMode) -> Result<f64> {
        self.forward_cached(a, b, mode).map(|(s, _)| s)
    }

    pub fn forward_cached(&self, a: &[f64], b: &[f64], mode: VbnMode) -> Result<(f64, DiscCache)> {
        let d = self.disc;
        if a.len() != d.cfg.window() {
            return Err(Error::ShapeMismatch(format!(
                "discriminator expects {} samples, got {}",
                d.cfg.window(),
                a.len()
            )));
        }
        let mut h = FeatureMap::from_pair(a, b)?;
        let mut layers = Vec::with_capacity(d.layers.len());
        for (layer, sn) in d.layers.iter().zip(&self.kernels) {
            let conv_out = conv1d_with_kernel(&h, &layer.conv, &sn.kernel)?;
            let (normed, vbn) = vbn_forward(&conv_out, &layer.vbn, &layer.gamma, &layer.beta, mode)?;
            let act = leaky_relu(&normed, LEAKY_SLOPE);
            let (attn, out) = match &layer.attn {
                Some(p) => {
                    let (o, c) = attn_forward_cached(&act, p)?;
                    (Some(c), o.f_tilde)
                }
                None => (None, act.clone()),
            };
            layers.push(LayerCache {
                input: h,
                conv_out,
                vbn,
                normed,
                act,
                attn,
            });
            h = out;
        }
        let reduced = conv1d_with_kernel(&h, &d.reduce, &self.reduce.kernel)?;
        let score = reduced.data().iter().zip(&d.head_weight).map(|(x, w)| x * w).sum::<f64>() + d.head_bias;
        Ok((
            score,
            DiscCache {
                layers,
                reduce_in: h,
                reduced,
            },
        ))
    }

    /// Parameter gradients and the gradient with respect to the stacked
    /// `[candidate, noisy]` input, for `∂loss/∂score = d_score`.
    pub fn backward(&self, cache: &DiscCache, d_score: f64) -> Result<(Discriminator, FeatureMap)> {
        let d = self.disc;
        let mut grads = d.zeros_like();
        grads.head_bias = d_score;
        grads.head_weight = cache.reduced.data().iter().map(|x| x * d_score).collect();
        let g_red = FeatureMap::from_vec(
            cache.reduced.len(),
            1,
            d.head_weight.iter().map(|w| w * d_score).collect(),
        )?;
        let cg = conv1d_backward_with_kernel(&cache.reduce_in, &d.reduce, &self.reduce.kernel, &g_red)?;
        grads.reduce.kernel = spectral_backward(&d.reduce.kernel, &self.reduce, &cg.kernel);
        grads.reduce.bias = cg.bias;
        let mut g = cg.input;
        for i in (0..d.layers.len()).rev() {
            let layer = &d.layers[i];
            let lc = &cache.layers[i];
            if let (Some(p), Some(ac)) = (&layer.attn, &lc.attn) {
                let ag = attn_backward(&lc.act, p, ac, &g);
                attn_grads_into(grads.layers[i].attn.as_mut().expect("same layout"), &ag);
                g = ag.input;
            }
            let g_norm = leaky_relu_backward(&lc.normed, LEAKY_SLOPE, &g);
            let vg = vbn_backward(&lc.conv_out, &lc.vbn, &layer.vbn, &layer.gamma, &g_norm);
            grads.layers[i].gamma = vg.gamma;
            grads.layers[i].beta = vg.beta;
            let cg = conv1d_backward_with_kernel(&lc.input, &layer.conv, &self.kernels[i].kernel, &vg.input)?;
            grads.layers[i].conv.kernel = spectral_backward(&layer.conv.kernel, &self.kernels[i], &cg.kernel);
            grads.layers[i].conv.bias = cg.bias;
            g = cg.input;
        }
        Ok((grads, g))
    }
}

impl Parameters for Discriminator {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64])) {
        for (i, l) in self.layers.iter().enumerate() {
            let p = format!("d.conv.{}", i + 1);
            f(&format!("{p}.kernel"), &l.conv.kernel);
            f(&format!("{p}.bias"), &l.conv.bias);
            f(&format!("{p}.gamma"), &l.gamma);
            f(&format!("{p}.beta"), &l.beta);
            if let Some(a) = &l.attn {
                visit_attn(&p, a, f);
            }
        }
        f("d.reduce.kernel", &self.reduce.kernel);
        f("d.reduce.bias", &self.reduce.bias);
        f("d.head.weight", &self.head_weight);
        f("d.head.bias", std::slice::from_ref(&self.head_bias));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            let p = format!("d.conv.{}", i + 1);
            f(&format!("{p}.kernel"), &mut l.conv.kernel);
            f(&format!("{p}.bias"), &mut l.conv.bias);
            f(&format!("{p}.gamma"), &mut l.gamma);
            f(&format!("{p}.beta"), &mut l.beta);
            if let Some(a) = &mut l.attn {
                visit_attn_mut(&p, a, f);
            }
        }
        f("d.reduce.kernel", &mut self.reduce.kernel);
        f("d.reduce.bias", &mut self.reduce.bias);
        f("d.head.weight", &mut self.head_weight);
        f("d.head.bias", std::slice::from_mut(&mut self.head_bias));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check_at;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn signal(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn ready(cfg: &ModelConfig) -> Discriminator {
        let mut d = Discriminator::build(cfg, 3).unwrap();
        let n = cfg.window();
        let (a, b, c, e) = (signal(n, 1), signal(n, 2), signal(n, 3), signal(n, 4));
        d.set_reference(&[(&a, &b), (&c, &e)]).unwrap();
        d
    }

    #[test]
    fn needs_reference_before_use() {
        let cfg = ModelConfig::shrunk(16, []);
        let d = Discriminator::build(&cfg, 3).unwrap();
        let x = signal(1024, 5);
        assert!(matches!(d.forward(&x, &x, VbnMode::Inference), Err(Error::UninitializedState)));
    }

    #[test]
    fn deterministic_and_order_sensitive() {
        let cfg = ModelConfig::shrunk(16, [9]);
        let d = ready(&cfg);
        let (a, b) = (signal(1024, 6), signal(1024, 7));
        let s = d.forward(&a, &b, VbnMode::Inference).unwrap();
        assert!(s.is_finite());
        assert_eq!(s, d.forward(&a, &b, VbnMode::Inference).unwrap());
        assert_ne!(s, d.forward(&b, &a, VbnMode::Inference).unwrap());
        assert!(d.forward(&a, &b[..100], VbnMode::Training).is_err());
    }

    #[test]
    fn deepest_map_reduces_to_time_features() {
        let cfg = ModelConfig::default();
        let d = Discriminator::build(&cfg, 1).unwrap();
        assert_eq!(d.head_weight.len(), 8);
        assert_eq!(d.layers[10].conv.out_channels, 1024);
        assert_eq!(d.reduce.out_channels, 1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cfg = ModelConfig::shrunk(32, [10]);
        let mut d = ready(&cfg);
        d.layers[9].attn.as_mut().unwrap().beta = 0.3;
        let (a, b) = (signal(512, 8), signal(512, 9));
        for mode in [VbnMode::Training, VbnMode::Inference] {
            let view = d.view().unwrap();
            let (s, cache) = view.forward_cached(&a, &b, mode).unwrap();
            let (grads, g_in) = view.backward(&cache, 2.0 * s).unwrap();
            let flat = d.to_flat();
            let analytic = grads.to_flat();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let coords: Vec<usize> = (0..60).map(|_| rng.random_range(0..flat.len())).collect();
            let mut probe = d.clone();
            let err = grad_check_at(
                |v| {
                    probe.load_flat(v).unwrap();
                    probe.forward(&a, &b, mode).unwrap().powi(2)
                },
                &flat,
                &analytic,
                &coords,
                1e-6,
            );
            assert!(err < 1e-5, "{mode:?} params {err}");

            let cand: Vec<f64> = g_in.channel(0);
            let coords: Vec<usize> = (0..20).map(|_| rng.random_range(0..512)).collect();
            let err = grad_check_at(|v| d.forward(v, &b, mode).unwrap().powi(2), &a, &cand, &coords, 1e-6);
            assert!(err < 1e-5, "{mode:?} input {err}");
        }
    }
}
