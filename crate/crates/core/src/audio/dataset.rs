//! Paired corpus directories: `clean/<id>.wav` alongside `noisy/<id>.wav`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use super::{read_wav, write_wav, UtterancePair};
use crate::error::{Error, Result};

fn wav_stems(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut stems = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                stems.insert(stem.to_owned());
            }
        }
    }
    Ok(stems)
}

/// Match `.wav` files of two directories by stem, sorted by stem. Any stem
/// present on only one side is an error naming that stem.
pub fn pair_files(left: &Path, right: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let a = wav_stems(left)?;
    let b = wav_stems(right)?;
    if let Some(stem) = a.symmetric_difference(&b).next() {
        return Err(Error::Unpaired(stem.clone()));
    }
    Ok(a.into_iter()
        .map(|s| {
            let file = format!("{s}.wav");
            (s, left.join(&file), right.join(&file))
        })
        .collect())
}

/// Load a `clean/` + `noisy/` corpus directory.
pub fn load_pair_dir(dir: &Path) -> Result<Vec<UtterancePair>> {
    pair_files(&dir.join("clean"), &dir.join("noisy"))?
        .into_iter()
        .map(|(id, c, n)| {
            let clean = read_wav(&c).map_err(|e| Error::in_file(&id, e))?;
            let noisy = read_wav(&n).map_err(|e| Error::in_file(&id, e))?;
            UtterancePair::new(id.clone(), clean, noisy, None).map_err(|e| Error::in_file(&id, e))
        })
        .collect()
}

/// Write pairs under `dir/clean` and `dir/noisy`.
pub fn write_pair_dir(dir: &Path, pairs: &[UtterancePair]) -> Result<()> {
    for sub in ["clean", "noisy"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for p in pairs {
        write_wav(dir.join("clean").join(format!("{}.wav", p.id)), &p.clean)?;
        write_wav(dir.join("noisy").join(format!("{}.wav", p.id)), &p.noisy)?;
    }
    Ok(())
}
