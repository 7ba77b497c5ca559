//! Half-wave-rectified spectral flux with adaptive-median peak picking.

use alloc::vec::Vec;

use super::mel::power_spectrogram;
use super::{OnsetSequence, HOP_S};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::math::median;
#[allow(unused_imports)]
use crate::math::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsetParams {
    /// Added to the local median of the max-normalised novelty curve.
    pub delta: f64,
    /// Half-width of the median window.
    pub median_half_s: f64,
    pub min_gap_s: f64,
    /// Peaks must be the maximum within this many frames on each side.
    pub peak_radius: usize,
}

impl Default for OnsetParams {
    fn default() -> Self {
        Self { delta: 0.1, median_half_s: 0.5, min_gap_s: 0.05, peak_radius: 3 }
    }
}

const MIN_CLIP_S: f64 = 0.1;
const SILENT_NOVELTY: f64 = 1e-9;

/// Bins of the previous frame are max-filtered over this many neighbours on each side.
const MAX_FILTER_BINS: usize = 2;

/// Flux against the frequency-max-filtered previous magnitude spectrum; the frame before the first is silence.
pub fn onset_novelty(clip: &AudioClip) -> Result<Vec<f64>> {
    let (spectra, _) = power_spectrogram(clip)?;
    let bins = spectra.first().map_or(0, Vec::len);
    let mut prev: Vec<f64> = alloc::vec![0.0; bins];
    let mut mag: Vec<f64> = alloc::vec![0.0; bins];
    Ok(spectra
        .iter()
        .map(|p| {
            for (m, q) in mag.iter_mut().zip(p) {
                *m = q.sqrt();
            }
            let mut flux = 0.0;
            for (b, m) in mag.iter().enumerate() {
                let lo = b.saturating_sub(MAX_FILTER_BINS);
                let hi = (b + MAX_FILTER_BINS).min(bins - 1);
                let reference = prev[lo..=hi].iter().copied().fold(0.0, f64::max);
                flux += (m - reference).max(0.0);
            }
            prev.copy_from_slice(&mag);
            flux
        })
        .collect())
}

pub fn detect_onsets(clip: &AudioClip) -> Result<OnsetSequence> {
    detect_onsets_with(clip, &OnsetParams::default())
}

pub fn detect_onsets_with(clip: &AudioClip, params: &OnsetParams) -> Result<OnsetSequence> {
    if clip.duration_s() < MIN_CLIP_S {
        return Err(Error::ClipTooShort { needed_s: MIN_CLIP_S, actual_s: clip.duration_s() });
    }
    let mut nov = onset_novelty(clip)?;
    let peak = nov.iter().copied().fold(0.0, f64::max);
    if peak <= SILENT_NOVELTY {
        return Ok(OnsetSequence::default());
    }
    for v in &mut nov {
        *v /= peak;
    }
    let hop_s = (HOP_S * clip.sample_rate_hz() as f64).round() / clip.sample_rate_hz() as f64;
    let half = (params.median_half_s / hop_s).round() as usize;
    let min_gap = (params.min_gap_s / hop_s).round() as usize;
    let n = nov.len();

    let mut picked: Vec<(usize, f64)> = Vec::new();
    for k in 0..n {
        let lo = k.saturating_sub(params.peak_radius);
        let hi = (k + params.peak_radius).min(n - 1);
        let v = nov[k];
        // Plateaus resolve to their first frame.
        if v <= 0.0 || nov[lo..k].iter().any(|&x| x >= v) || nov[k + 1..=hi].iter().any(|&x| x > v) {
            continue;
        }
        let threshold = median(&nov[k.saturating_sub(half)..=(k + half).min(n - 1)]) + params.delta;
        if v <= threshold {
            continue;
        }
        match picked.last_mut() {
            Some(last) if k - last.0 < min_gap => {
                if v > last.1 {
                    *last = (k, v);
                }
            }
            _ => picked.push((k, v)),
        }
    }
    Ok(OnsetSequence { onset_times_s: picked.into_iter().map(|(k, _)| k as f64 * hop_s).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};

    fn bursts(starts: &[f64], seconds: f64, gain: f64) -> AudioClip {
        let n = (seconds * 16_000.0) as usize;
        let mut s = vec![0.0; n];
        for &t0 in starts {
            let a = (t0 * 16_000.0) as usize;
            for (k, v) in s[a..(a + 3200).min(n)].iter_mut().enumerate() {
                let t = k as f64 / 16_000.0;
                let env = (t / 0.005).min(1.0) * ((0.2 - t) / 0.01).clamp(0.0, 1.0);
                *v += gain * env * (2.0 * PI * 330.0 * t).sin();
            }
        }
        AudioClip::new("b", s, 16_000).unwrap()
    }

    #[test]
    fn silence_has_no_onsets() {
        let clip = AudioClip::new("z", vec![0.0; 16_000], 16_000).unwrap();
        assert!(detect_onsets(&clip).unwrap().is_empty());
    }

    #[test]
    fn three_bursts() {
        let starts = [0.5, 1.5, 2.5];
        let o = detect_onsets(&bursts(&starts, 3.0, 0.5)).unwrap();
        assert_eq!(o.len(), 3, "{:?}", o.onset_times_s);
        for (got, want) in o.onset_times_s.iter().zip(starts) {
            assert!((got - want).abs() <= 0.03);
        }
    }

    #[test]
    fn jittered_train_matches_construction() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let starts: Vec<f64> = (0..12).map(|i| 0.3 + 0.5 * i as f64 + rng.random_range(-0.08..0.08)).collect();
        let o = detect_onsets(&bursts(&starts, 6.5, 0.4)).unwrap();
        assert_eq!(o.len(), starts.len());
        for (got, want) in o.onset_times_s.iter().zip(&starts) {
            assert!((got - want).abs() <= 0.03);
        }
    }

    #[test]
    fn count_is_gain_invariant() {
        let starts = [0.4, 0.9, 1.7, 2.2];
        let base = detect_onsets(&bursts(&starts, 3.0, 0.8)).unwrap().len();
        for g in [0.11, 0.3, 0.5] {
            assert_eq!(detect_onsets(&bursts(&starts, 3.0, 0.8 * g)).unwrap().len(), base);
        }
    }

    #[test]
    fn too_short() {
        let clip = AudioClip::new("z", vec![0.0; 800], 16_000).unwrap();
        assert!(matches!(detect_onsets(&clip), Err(Error::ClipTooShort { .. })));
    }
}
