use std::path::Path;

use super::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

const PCM_SCALE: f64 = 32768.0;

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        // the file itself opened fine, so short reads mean a truncated body
        hound::Error::IoError(io) => Error::MalformedHeader(format!("{}: {io}", path.display())),
        hound::Error::Unsupported => Error::UnsupportedFormat(format!("{}: not 16-bit PCM", path.display())),
        other => Error::MalformedHeader(format!("{}: {other}", path.display())),
    }
}

fn map_write(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => map_hound(path, other),
    }
}

/// Read a mono 16-bit PCM WAV at 16 kHz, scaling samples by 1/32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedFormat(format!(
            "{}-bit {:?}, expected 16-bit PCM",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::UnsupportedFormat(format!("sample rate {} Hz", spec.sample_rate)));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / PCM_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Write a mono 16-bit PCM WAV. Samples are clamped to [-1, 1], scaled by
/// 32768, rounded half away from zero and clamped to the i16 range.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_write(path, e))?;
    for &s in buf.samples() {
        writer.write_sample(to_pcm(s)).map_err(|e| map_write(path, e))?;
    }
    writer.finalize().map_err(|e| map_write(path, e))
}

fn to_pcm(s: f64) -> i16 {
    (s.clamp(-1.0, 1.0) * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, channels: u16, bits: u16, rate: u32, values: &[i32]) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &v in values {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn scales_pcm_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, 1, 16, 16000, &[0, 16384, -32768]);
        assert_eq!(read_wav(&p).unwrap().samples(), &[0.0, 0.5, -1.0]);
    }

    #[test]
    fn rejects_unsupported_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let stereo = dir.path().join("s.wav");
        write_raw(&stereo, 2, 16, 16000, &[0, 0]);
        assert!(matches!(read_wav(&stereo), Err(Error::UnsupportedFormat(_))));
        let wide = dir.path().join("w.wav");
        write_raw(&wide, 1, 24, 16000, &[0]);
        assert!(matches!(read_wav(&wide), Err(Error::UnsupportedFormat(_))));
        let rate = dir.path().join("r.wav");
        write_raw(&rate, 1, 16, 8000, &[0]);
        assert!(matches!(read_wav(&rate), Err(Error::UnsupportedFormat(_))));
        let junk = dir.path().join("j.wav");
        std::fs::write(&junk, b"RIFF\x04\x00\x00\x00WAVEjunk").unwrap();
        let r = read_wav(&junk);
        assert!(matches!(r, Err(Error::MalformedHeader(_))), "{r:?}");
    }

    #[test]
    fn clamp_and_round_on_write() {
        assert_eq!(to_pcm(1.0), 32767);
        assert_eq!(to_pcm(0.0), 0);
        assert_eq!(to_pcm(-1.0), -32768);
        assert_eq!(to_pcm(2.5), 32767);
        assert_eq!(to_pcm(0.5 / 32768.0), 1);
        assert_eq!(to_pcm(-0.5 / 32768.0), -1);
    }

    #[test]
    fn file_round_trip_is_sample_identical() {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("src.wav");
        let values: Vec<i32> = (0..500).map(|i| ((i * 7919) % 65536) - 32768).collect();
        write_raw(&src, 1, 16, 16000, &values);
        let a = read_wav(&src).unwrap();
        let dst = dir.path().join("dst.wav");
        write_wav(&dst, &a).unwrap();
        let b = read_wav(&dst).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read(&src).unwrap(), std::fs::read(&dst).unwrap());
    }

    #[test]
    fn float_round_trip_within_one_step() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.013).sin() * 0.9).collect();
        write_wav(&p, &AudioBuffer::from_samples(samples.clone()).unwrap()).unwrap();
        let back = read_wav(&p).unwrap();
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }
}
