//! WAV decoding to the canonical mono rate, and encoding for synthetic corpora.

use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use singassess_core::audio::downmix;
use singassess_core::AudioClip;

use crate::error::{Error, Result};

/// Clip id for a path: the file stem.
pub fn clip_id_for(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Reads any PCM or float WAV, downmixes to mono, and resamples to `target_rate_hz`.
pub fn load_audio(path: &Path, target_rate_hz: u32) -> Result<AudioClip> {
    let reader = WavReader::open(path).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => {
            reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>().map_err(|e| classify(path, e))?
        }
        (SampleFormat::Int, bits @ 8..=32) => {
            let scale = 2f64.powi(i32::from(bits) - 1);
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| f64::from(v) / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| classify(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec { path: path.into(), reason: format!("{fmt:?} with {bits} bits") })
        }
    };
    if interleaved.is_empty() {
        return Err(Error::ZeroLengthAudio { path: path.into() });
    }
    let mono = downmix(&interleaved, usize::from(spec.channels));
    let clip = AudioClip::new(clip_id_for(path), mono.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(), spec.sample_rate)?;
    Ok(clip.resampled(target_rate_hz)?)
}

fn classify(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) if io.kind() == ErrorKind::NotFound => Error::io(path, io),
        hound::Error::IoError(io) => Error::UnreadableAudio { path: path.into(), reason: io.to_string() },
        hound::Error::Unsupported => Error::UnsupportedCodec { path: path.into(), reason: "unsupported WAV variant".into() },
        other => Error::UnreadableAudio { path: path.into(), reason: other.to_string() },
    }
}

/// Writes 16-bit mono PCM.
pub fn write_wav(path: &Path, clip: &AudioClip) -> Result<()> {
    let spec = WavSpec { channels: 1, sample_rate: clip.sample_rate_hz(), bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut w = WavWriter::create(path, spec).map_err(|e| wav_write_error(path, e))?;
    for &s in clip.samples() {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16).map_err(|e| wav_write_error(path, e))?;
    }
    w.finalize().map_err(|e| wav_write_error(path, e))
}

fn wav_write_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other),
    }
}
