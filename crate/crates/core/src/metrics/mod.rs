//! Objective quality measures and corpus-level reports.

mod ssnr;
mod stoi;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use ssnr::{ssnr, ssnr_samples, SILENCE_ENERGY, SSNR_FRAME, SSNR_HOP, SSNR_MAX_DB, SSNR_MIN_DB};
pub use stoi::{stoi, stoi_samples};

use crate::audio::{read_wav, AudioBuffer};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub ssnr_db: f64,
    pub stoi: f64,
}

/// Per-utterance scores sorted by id, with arithmetic means.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<UtteranceScore>,
    pub mean_ssnr_db: f64,
    pub mean_stoi: f64,
}

impl MetricReport {
    pub fn from_rows(mut rows: Vec<UtteranceScore>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let n = rows.len() as f64;
        let mean_ssnr_db = rows.iter().map(|r| r.ssnr_db).sum::<f64>() / n;
        let mean_stoi = rows.iter().map(|r| r.stoi).sum::<f64>() / n;
        Ok(Self {
            rows,
            mean_ssnr_db,
            mean_stoi,
        })
    }

    /// `id,ssnr_db,stoi` rows followed by a `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,ssnr_db,stoi\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{:.4},{:.4}", r.id, r.ssnr_db, r.stoi);
        }
        let _ = writeln!(s, "MEAN,{:.4},{:.4}", self.mean_ssnr_db, self.mean_stoi);
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Mean of the corpus means over several reports, e.g. one per
    /// checkpoint snapshot.
    pub fn average(reports: &[MetricReport]) -> Result<(f64, f64)> {
        if reports.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = reports.len() as f64;
        Ok((
            reports.iter().map(|r| r.mean_ssnr_db).sum::<f64>() / n,
            reports.iter().map(|r| r.mean_stoi).sum::<f64>() / n,
        ))
    }
}

pub fn score_pair(id: &str, clean: &AudioBuffer, test: &AudioBuffer) -> Result<UtteranceScore> {
    let wrap = |e| Error::in_file(id, e);
    Ok(UtteranceScore {
        id: id.to_owned(),
        ssnr_db: ssnr(clean, test).map_err(wrap)?,
        stoi: stoi(clean, test).map_err(wrap)?,
    })
}

/// Score in-memory `(id, clean, test)` triples.
pub fn evaluate_buffers(items: &[(String, AudioBuffer, AudioBuffer)], parallel: bool) -> Result<MetricReport> {
    let rows: Result<Vec<_>> = if parallel {
        items.par_iter().map(|(id, c, t)| score_pair(id, c, t)).collect()
    } else {
        items.iter().map(|(id, c, t)| score_pair(id, c, t)).collect()
    };
    MetricReport::from_rows(rows?)
}

/// Score `(id, clean path, test path)` triples read from disk.
pub fn evaluate_corpus(pairs: &[(String, PathBuf, PathBuf)], parallel: bool) -> Result<MetricReport> {
    let load = |(id, c, t): &(String, PathBuf, PathBuf)| -> Result<UtteranceScore> {
        let clean = read_wav(c).map_err(|e| Error::in_file(id, e))?;
        let test = read_wav(t).map_err(|e| Error::in_file(id, e))?;
        score_pair(id, &clean, &test)
    };
    let rows: Result<Vec<_>> = if parallel {
        pairs.par_iter().map(load).collect()
    } else {
        pairs.iter().map(load).collect()
    };
    MetricReport::from_rows(rows?)
}
