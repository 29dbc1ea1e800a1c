use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub rmsprop_decay: f64,
    pub rmsprop_eps: f64,
    pub lambda_l1: f64,
    pub seed: u64,
    /// Stop after this many updates instead of after `epochs`.
    pub steps: Option<usize>,
    /// Overlap between consecutive training windows.
    pub overlap: f64,
    /// Evaluate per-example work on the rayon pool. Results are identical
    /// either way; reductions always run in example order.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 50,
            lr: 2e-4,
            rmsprop_decay: 0.9,
            rmsprop_eps: 1e-8,
            lambda_l1: 100.0,
            seed: 0,
            steps: None,
            overlap: 0.5,
            parallel: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_owned()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.lambda_l1 >= 0.0 && self.lambda_l1.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || self.rmsprop_eps <= 0.0 {
            return bad("rmsprop decay must lie in [0, 1) and eps be positive");
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad("overlap must lie in [0, 1)");
        }
        if self.epochs == 0 && self.steps.is_none() {
            return bad("need at least one epoch");
        }
        Ok(())
    }

    /// Key/value echo. `parallel` is left out: it does not affect results.
    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("epochs".into(), self.epochs.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("lr".into(), self.lr.to_string()),
            ("rmsprop_decay".into(), self.rmsprop_decay.to_string()),
            ("rmsprop_eps".into(), self.rmsprop_eps.to_string()),
            ("lambda_l1".into(), self.lambda_l1.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("steps".into(), self.steps.map_or_else(|| "none".into(), |s| s.to_string())),
            ("overlap".into(), self.overlap.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse `{v}`")))
        }
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "rmsprop_decay" => self.rmsprop_decay = parse(key, value)?,
            "rmsprop_eps" => self.rmsprop_eps = parse(key, value)?,
            "lambda_l1" | "lambda" => self.lambda_l1 = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "steps" => {
                self.steps = match value.trim() {
                    "none" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "overlap" => self.overlap = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_echo(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in map {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
