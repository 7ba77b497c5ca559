//! Frame-level acoustic features on a shared 10 ms time base.
//!
//! All extractors use centred frames: frame `k` is centred on `k * hop` and the signal is
//! zero-padded on both sides, so a clip of `N` samples yields `1 + N / hop` frames for
//! every feature. That lets DTW paths computed on pitch contours index mel frames directly.

mod mel;
mod onset;
mod pitch;
mod windows;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use mel::{mel_band_centres, mel_features, MEL_FMAX_HZ, mel_to_hz, hz_to_mel, MelFilterbank, MEL_ENERGY_FLOOR, STFT_WINDOW_S};
pub use onset::{detect_onsets, detect_onsets_with, onset_novelty, OnsetParams};
pub use pitch::{extract_f0, extract_f0_with, quantise_cents, PitchParams, PITCH_WINDOW_S};
pub use windows::{window_features, FeatureWindow, FeatureWindows};

use crate::audio::AudioClip;
use crate::config::FeatureConfig;
use crate::error::Result;

/// Frequency of MIDI note 0; cents are measured from here so that `cents = 100 * midi`.
pub const CENTS_REFERENCE_HZ: f64 = 8.175_798_915_643_707;

/// Hop shared by every feature.
pub const HOP_S: f64 = 0.01;

/// Number of centred frames for a signal of `len` samples.
pub(crate) fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Copies the `out.len()`-sample window centred on `center`, zero-padding outside the signal.
pub(crate) fn centred_frame(samples: &[f64], center: usize, out: &mut [f64]) {
    let half = out.len() / 2;
    for (j, o) in out.iter_mut().enumerate() {
        let idx = center as i64 - half as i64 + j as i64;
        *o = if idx >= 0 && (idx as usize) < samples.len() { samples[idx as usize] } else { 0.0 };
    }
}

/// F0 trajectory in cents (MIDI * 100). Unvoiced frames carry `0.0` and `voiced = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchContour {
    pub frame_times_s: Vec<f64>,
    pub f0_cents: Vec<f64>,
    pub voiced: Vec<bool>,
    pub hop_s: f64,
}

impl PitchContour {
    /// Builds a contour from per-frame optional cents at a uniform hop.
    pub fn from_frames(frames: &[Option<f64>], hop_s: f64) -> Self {
        Self {
            frame_times_s: (0..frames.len()).map(|k| k as f64 * hop_s).collect(),
            f0_cents: frames.iter().map(|f| f.unwrap_or(0.0)).collect(),
            voiced: frames.iter().map(Option::is_some).collect(),
            hop_s,
        }
    }

    pub fn len(&self) -> usize {
        self.f0_cents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0_cents.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.voiced[k].then(|| self.f0_cents[k])
    }

    pub fn voiced_cents(&self) -> Vec<f64> {
        self.f0_cents.iter().zip(&self.voiced).filter(|(_, &v)| v).map(|(&c, _)| c).collect()
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }

    /// Adds `cents` to every voiced frame.
    pub fn shifted(&self, cents: f64) -> Self {
        let mut out = self.clone();
        for (c, &v) in out.f0_cents.iter_mut().zip(&self.voiced) {
            if v {
                *c += cents;
            }
        }
        out
    }
}

/// Onset times in seconds, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OnsetSequence {
    pub onset_times_s: Vec<f64>,
}

impl OnsetSequence {
    pub fn new(mut onset_times_s: Vec<f64>) -> Self {
        onset_times_s.sort_by(f64::total_cmp);
        onset_times_s.dedup();
        Self { onset_times_s }
    }

    pub fn len(&self) -> usize {
        self.onset_times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.onset_times_s.is_empty()
    }
}

/// Log-mel energies, one row per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelMatrix {
    pub frames: Vec<Vec<f64>>,
    pub n_mels: usize,
    pub hop_s: f64,
}

impl MelMatrix {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.frames.len() as f64 * self.hop_s
    }
}

/// Everything the reference-based scorer and the critic read from one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeFeatures {
    pub clip_id: alloc::string::String,
    pub contour: PitchContour,
    pub onsets: OnsetSequence,
    pub mel: MelMatrix,
}

/// Runs the three extractors with the configured parameters.
pub fn extract_take(clip: &AudioClip, cfg: &FeatureConfig) -> Result<TakeFeatures> {
    let pitch = PitchParams {
        fmin_hz: cfg.fmin_hz,
        fmax_hz: cfg.fmax_hz,
        voicing_threshold: cfg.voicing_threshold,
    };
    let onset = OnsetParams { delta: cfg.onset_delta, ..OnsetParams::default() };
    Ok(TakeFeatures {
        clip_id: clip.id().into(),
        contour: extract_f0_with(clip, &pitch)?,
        onsets: detect_onsets_with(clip, &onset)?,
        mel: mel_features(clip, cfg.n_mels)?,
    })
}
