use std::collections::{BTreeMap, BTreeSet};

use crate::attention::{DEFAULT_K, DEFAULT_P, MAX_LAYER};
use crate::error::{Error, Result};

pub const DEFAULT_SCHEDULE: [usize; 11] = [16, 32, 32, 64, 64, 128, 128, 256, 256, 512, 1024];
pub const DEFAULT_FILTER_WIDTH: usize = 31;
pub const DEFAULT_STRIDE: usize = 2;
pub const DEFAULT_INPUT_LEN: usize = 16_384;

/// Network layout. `input_len` and `filter_schedule` are full-size values;
/// `scale_divisor` shrinks both (see [`ModelConfig::window`] and
/// [`ModelConfig::channels`]).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub filter_schedule: Vec<usize>,
    pub filter_width: usize,
    pub stride: usize,
    pub input_len: usize,
    pub attention_layers: BTreeSet<usize>,
    pub k: usize,
    pub p: usize,
    pub scale_divisor: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            filter_schedule: DEFAULT_SCHEDULE.to_vec(),
            filter_width: DEFAULT_FILTER_WIDTH,
            stride: DEFAULT_STRIDE,
            input_len: DEFAULT_INPUT_LEN,
            attention_layers: BTreeSet::new(),
            k: DEFAULT_K,
            p: DEFAULT_P,
            scale_divisor: 1,
        }
    }
}

/// Parse `none`, `all` (layers 3..=11) or a comma list such as `3,5,11`.
pub fn parse_attention_layers(s: &str) -> Result<BTreeSet<usize>> {
    match s.trim() {
        "" | "none" => Ok(BTreeSet::new()),
        "all" => Ok((3..=MAX_LAYER).collect()),
        list => list
            .split(',')
            .map(|t| {
                let layer: usize = t
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad attention layer `{t}`")))?;
                if !(1..=MAX_LAYER).contains(&layer) {
                    return Err(Error::OutOfRangeLayer { layer, max: MAX_LAYER });
                }
                Ok(layer)
            })
            .collect(),
    }
}

pub fn format_attention_layers(layers: &BTreeSet<usize>) -> String {
    if layers.is_empty() {
        return "none".into();
    }
    layers.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl ModelConfig {
    /// Default layout shrunk by `divisor`, with attention at `layers`.
    pub fn shrunk(divisor: usize, layers: impl IntoIterator<Item = usize>) -> Self {
        Self {
            scale_divisor: divisor,
            attention_layers: layers.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn depth(&self) -> usize {
        self.filter_schedule.len()
    }

    /// Segment length the networks operate on.
    pub fn window(&self) -> usize {
        self.input_len / self.scale_divisor.max(1)
    }

    /// Channel count after encoder layer `i` (1-based); `channels(0)` is the
    /// single waveform channel.
    pub fn channels(&self, i: usize) -> usize {
        if i == 0 {
            1
        } else {
            (self.filter_schedule[i - 1] / self.scale_divisor.max(1)).max(1)
        }
    }

    /// Time dimension after encoder layer `i`; `time_dim(0)` is the window.
    pub fn time_dim(&self, i: usize) -> usize {
        (0..i).fold(self.window(), |n, _| n.div_ceil(self.stride))
    }

    /// Encoder feature map shapes `(time, channels)` for layers 1..=depth.
    pub fn ladder(&self) -> Vec<(usize, usize)> {
        (1..=self.depth()).map(|i| (self.time_dim(i), self.channels(i))).collect()
    }

    /// Shape of the latent stacked on the deepest encoder map.
    pub fn latent_shape(&self) -> (usize, usize) {
        let d = self.depth();
        (self.time_dim(d), self.channels(d))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.filter_schedule.len() != MAX_LAYER {
            return bad(format!("filter schedule needs {MAX_LAYER} entries, got {}", self.filter_schedule.len()));
        }
        if self.filter_schedule.contains(&0) {
            return bad("filter counts must be positive".into());
        }
        if self.filter_width.is_multiple_of(2) {
            return bad(format!("filter width {} must be odd", self.filter_width));
        }
        if self.stride == 0 || self.k == 0 || self.p == 0 {
            return bad("stride, k and p must be positive".into());
        }
        if self.scale_divisor == 0 || !self.input_len.is_multiple_of(self.scale_divisor) || self.window() == 0 {
            return bad(format!(
                "scale divisor {} must divide input length {}",
                self.scale_divisor, self.input_len
            ));
        }
        for &l in &self.attention_layers {
            if !(1..=self.depth()).contains(&l) {
                return Err(Error::OutOfRangeLayer {
                    layer: l,
                    max: self.depth(),
                });
            }
            // encoder/discriminator map at l, decoder map mirrored to l-1
            let mut maps = vec![self.channels(l)];
            if self.decoder_attention(l) {
                maps.push(self.channels(l - 1));
            }
            for c in maps {
                if c % self.k != 0 {
                    return Err(Error::IndivisibleChannels { channels: c, k: self.k });
                }
            }
        }
        Ok(())
    }

    /// Whether the decoder carries attention at layer `l` (its output map
    /// has the shape of encoder layer `l − 1`, so layer 1 has none).
    pub fn decoder_attention(&self, l: usize) -> bool {
        l >= 2 && self.attention_layers.contains(&l)
    }

    /// Flat key/value echo used by checkpoints and run manifests.
    pub fn echo(&self) -> Vec<(String, String)> {
        let schedule = self.filter_schedule.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("filter_schedule".into(), schedule),
            ("filter_width".into(), self.filter_width.to_string()),
            ("stride".into(), self.stride.to_string()),
            ("input_len".into(), self.input_len.to_string()),
            ("attention_layers".into(), format_attention_layers(&self.attention_layers)),
            ("k".into(), self.k.to_string()),
            ("p".into(), self.p.to_string()),
            ("scale_divisor".into(), self.scale_divisor.to_string()),
        ]
    }

    /// Inverse of [`ModelConfig::echo`]; unknown keys are ignored.
    pub fn from_echo(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in map {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Set one field from its echoed text form. Returns whether the key was
    /// recognized.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| -> Result<usize> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: `{v}` is not a count")))
        };
        match key {
            "filter_schedule" => {
                self.filter_schedule = value.split(',').map(num).collect::<Result<_>>()?;
            }
            "filter_width" => self.filter_width = num(value)?,
            "stride" => self.stride = num(value)?,
            "input_len" => self.input_len = num(value)?,
            "attention_layers" => self.attention_layers = parse_attention_layers(value)?,
            "k" => self.k = num(value)?,
            "p" => self.p = num(value)?,
            "scale_divisor" => self.scale_divisor = num(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
