//! Generator and discriminator networks.

mod config;
mod discriminator;
mod enhance;
mod generator;

pub use config::{
    format_attention_layers, parse_attention_layers, ModelConfig, DEFAULT_FILTER_WIDTH, DEFAULT_INPUT_LEN,
    DEFAULT_SCHEDULE, DEFAULT_STRIDE,
};
pub use discriminator::{DiscCache, DiscLayer, DiscView, Discriminator};
pub use enhance::{enhance_samples, enhance_utterance};
pub use generator::{DecoderLayer, EncoderLayer, GenCache, Generator};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::FeatureMap;

/// Named trainable tensors, visited in a fixed order. A gradient is stored
/// in a value of the same type, so flattening a network and its gradient
/// lines the two up.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, v| n += v.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.visit(&mut |_, v| out.extend_from_slice(v));
        out
    }

    fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        self.visit_mut(&mut |_, v| {
            v.copy_from_slice(&flat[at..at + v.len()]);
            at += v.len();
        });
        Ok(())
    }

    /// Same structure with every trainable value set to zero.
    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_mut(&mut |_, v| v.fill(0.0));
        z
    }

    /// Elementwise `self += other` over trainable values.
    fn accumulate(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.to_flat();
        let mut at = 0;
        self.visit_mut(&mut |_, v| {
            for (a, b) in v.iter_mut().zip(&flat[at..]) {
                *a += b;
            }
            at += v.len();
        });
    }

    /// Attention shortcut gains, in visiting order.
    fn betas(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |name, v| {
            if name.ends_with(".attn.beta") {
                out.push(v[0]);
            }
        });
        out
    }
}

/// Noise stacked onto the deepest encoder map.
#[derive(Clone, Debug, PartialEq)]
pub struct Latent {
    pub z: FeatureMap,
}

impl Latent {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self {
            z: FeatureMap::zeros(shape.0, shape.1),
        }
    }
}

/// I.i.d. standard normal latent of the given `(time, channels)` shape.
pub fn sample_latent<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Latent {
    let data = (0..shape.0 * shape.1).map(|_| StandardNormal.sample(rng)).collect();
    Latent {
        z: FeatureMap::from_vec(shape.0, shape.1, data).expect("shape"),
    }
}
