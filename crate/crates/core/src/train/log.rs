use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    /// Unweighted L1 term (mean absolute error).
    pub g_l1: f64,
    /// Attention gains before this step's updates: generator encoder,
    /// generator decoder, then discriminator.
    pub betas: Vec<f64>,
}

impl StepRecord {
    pub fn is_finite(&self) -> bool {
        [self.d_loss, self.g_adv, self.g_l1].iter().chain(&self.betas).all(|v| v.is_finite())
    }

    fn csv_row(&self) -> String {
        let mut s = format!("{},{},{},{}", self.step, self.d_loss, self.g_adv, self.g_l1);
        for b in &self.betas {
            let _ = write!(s, ",{b}");
        }
        s
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    /// `step,d_loss,g_adv,g_l1,beta_0,...`
    pub fn to_csv(&self) -> String {
        let n_beta = self.records.first().map_or(0, |r| r.betas.len());
        let mut s = String::from("step,d_loss,g_adv,g_l1");
        for i in 0..n_beta {
            let _ = write!(s, ",beta_{i}");
        }
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Mean of `g_l1` over the first / last `n` records.
    pub fn l1_window_means(&self, n: usize) -> Option<(f64, f64)> {
        if self.records.is_empty() || n == 0 {
            return None;
        }
        let n = n.min(self.records.len());
        let avg = |rs: &[StepRecord]| rs.iter().map(|r| r.g_l1).sum::<f64>() / rs.len() as f64;
        Some((avg(&self.records[..n]), avg(&self.records[self.records.len() - n..])))
    }
}
