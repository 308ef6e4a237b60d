use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

use super::mel::SAMPLE_RATE_HZ;

fn hound_err(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::AudioFormat(other.to_string()),
    }
}

/// Reads a mono 16 kHz 16-bit PCM WAV file into samples in `[-1, 1)`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let reader = WavReader::open(path).map_err(hound_err)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::AudioFormat(format!(
            "expected 16-bit integer PCM, got {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(Error::AudioFormat(format!(
            "expected mono, got {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate as usize != SAMPLE_RATE_HZ {
        return Err(Error::AudioFormat(format!(
            "expected {SAMPLE_RATE_HZ} Hz, got {} Hz",
            spec.sample_rate
        )));
    }
    reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0).map_err(hound_err))
        .collect()
}

/// Writes samples (clipped to `[-1, 1]`) as mono 16 kHz 16-bit PCM.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE_HZ as u32,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(hound_err)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(hound_err)?;
    }
    w.finalize().map_err(hound_err)
}
