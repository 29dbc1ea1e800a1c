//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SASEGAN\0"
//! version    u32
//! manifest   u32 byte length, then UTF-8 `key=value` lines
//! tensors    u32 count, then per tensor:
//!              u16 name length, name (UTF-8), u64 value count, f64 values
//! digest     32-byte SHA-256 of everything before it
//! ```
//!
//! Manifest keys are `model.*` (architecture echo), `train.*` (training
//! configuration echo), `step`, `format_version` and `producer`. Nothing
//! time-dependent is stored, so equal states give byte-identical files.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::TrainConfig;
use super::optim::OptimState;
use super::trainer::TrainState;
use crate::error::{Error, Result};
use crate::model::{Discriminator, Generator, ModelConfig, Parameters};

pub const MAGIC: &[u8; 8] = b"SASEGAN\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn manifest(state: &TrainState) -> String {
    let mut lines = vec![
        format!("format_version={FORMAT_VERSION}"),
        format!("producer=sasegan {}", env!("CARGO_PKG_VERSION")),
        format!("step={}", state.step),
    ];
    lines.extend(state.model_config().echo().into_iter().map(|(k, v)| format!("model.{k}={v}")));
    lines.extend(state.tcfg.echo().into_iter().map(|(k, v)| format!("train.{k}={v}")));
    lines.join("\n") + "\n"
}

fn tensors(state: &TrainState) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    state.gen.visit(&mut |n, v| out.push((n.to_owned(), v.to_vec())));
    state.gen.visit_state(&mut |n, v| out.push((n.to_owned(), v.to_vec())));
    state.disc.visit(&mut |n, v| out.push((n.to_owned(), v.to_vec())));
    state.disc.visit_state(&mut |n, v| out.push((n.to_owned(), v.to_vec())));
    out.push(("opt.g.acc".into(), state.g_opt.acc.clone()));
    out.push(("opt.d.acc".into(), state.d_opt.acc.clone()));
    out
}

pub fn encode_checkpoint(state: &TrainState) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let m = manifest(state);
    buf.extend_from_slice(&(m.len() as u32).to_le_bytes());
    buf.extend_from_slice(m.as_bytes());
    let ts = tensors(state);
    buf.extend_from_slice(&(ts.len() as u32).to_le_bytes());
    for (name, values) in &ts {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

pub fn save_checkpoint(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(state)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptFile("unexpected end of data".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn text(&mut self, n: usize) -> Result<&'a str> {
        std::str::from_utf8(self.take(n)?).map_err(|_| Error::CorruptFile("invalid UTF-8".into()))
    }
}

/// Parsed container: manifest entries and named tensors.
pub struct RawCheckpoint {
    pub manifest: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Vec<f64>>,
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawCheckpoint> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::CorruptFile("not a checkpoint (bad magic)".into()));
    }
    let mut r = Reader {
        buf: bytes,
        at: MAGIC.len(),
    };
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    if bytes.len() < r.at + DIGEST_LEN {
        return Err(Error::CorruptFile("truncated".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::CorruptFile("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, at: r.at };
    let mlen = r.u32()? as usize;
    let mut manifest = BTreeMap::new();
    for line in r.text(mlen)?.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::CorruptFile(format!("manifest line `{line}`")))?;
        manifest.insert(k.to_owned(), v.to_owned());
    }
    let count = r.u32()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let nlen = r.u16()? as usize;
        let name = r.text(nlen)?.to_owned();
        let n = usize::try_from(r.u64()?).map_err(|_| Error::CorruptFile("tensor too large".into()))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::CorruptFile("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        tensors.insert(name, values);
    }
    if r.at != body.len() {
        return Err(Error::CorruptFile("trailing bytes".into()));
    }
    Ok(RawCheckpoint { manifest, tensors })
}

fn section(manifest: &BTreeMap<String, String>, prefix: &str) -> BTreeMap<String, String> {
    manifest
        .iter()
        .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_owned(), v.clone())))
        .collect()
}

fn fill(
    tensors: &mut BTreeMap<String, Vec<f64>>,
    visit: impl FnOnce(&mut dyn FnMut(&str, &mut [f64])),
) -> Result<()> {
    let mut err = None;
    visit(&mut |name, dst| {
        if err.is_some() {
            return;
        }
        match tensors.remove(name) {
            Some(v) if v.len() == dst.len() => dst.copy_from_slice(&v),
            Some(v) => {
                err = Some(Error::CorruptFile(format!(
                    "tensor {name} has {} values, expected {}",
                    v.len(),
                    dst.len()
                )))
            }
            None => err = Some(Error::CorruptFile(format!("missing tensor {name}"))),
        }
    });
    err.map_or(Ok(()), Err)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainState> {
    let mut raw = decode_raw(bytes)?;
    let corrupt = |e: Error| match e {
        Error::InvalidConfig(m) => Error::CorruptFile(format!("manifest: {m}")),
        other => other,
    };
    let model = ModelConfig::from_echo(&section(&raw.manifest, "model.")).map_err(corrupt)?;
    let tcfg = TrainConfig::from_echo(&section(&raw.manifest, "train.")).map_err(corrupt)?;
    let step = raw
        .manifest
        .get("step")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::CorruptFile("manifest lacks step".into()))?;
    let mut gen = Generator::build(&model, 0)?.zeros_like();
    let mut disc = Discriminator::build(&model, 0)?;
    fill(&mut raw.tensors, |f| gen.visit_mut(f))?;
    fill(&mut raw.tensors, |f| gen.visit_state_mut(f))?;
    fill(&mut raw.tensors, |f| disc.visit_mut(f))?;
    fill(&mut raw.tensors, |f| disc.visit_state_mut(f))?;
    let mut g_opt = OptimState::for_params(&gen);
    let mut d_opt = OptimState::for_params(&disc);
    fill(&mut raw.tensors, |f| f("opt.g.acc", &mut g_opt.acc))?;
    fill(&mut raw.tensors, |f| f("opt.d.acc", &mut d_opt.acc))?;
    if let Some(name) = raw.tensors.keys().next() {
        return Err(Error::CorruptFile(format!("unexpected tensor {name}")));
    }
    Ok(TrainState {
        gen,
        disc,
        g_opt,
        d_opt,
        tcfg,
        step,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Load a checkpoint that must have been written for `expected`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    check_config(state.model_config(), expected)?;
    Ok(state)
}

pub fn check_config(found: &ModelConfig, expected: &ModelConfig) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    let diffs: Vec<String> = found
        .echo()
        .into_iter()
        .zip(expected.echo())
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, b)| format!("{} is {} in the checkpoint, {} requested", a.0, a.1, b.1))
        .collect();
    Err(Error::ConfigMismatch(diffs.join("; ")))
}
