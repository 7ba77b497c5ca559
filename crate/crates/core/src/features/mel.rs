//! STFT log-mel spectrogram with a peak-normalised triangular filterbank (HTK mel scale).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{centred_frame, frame_count, MelMatrix, HOP_S};
use crate::audio::AudioClip;
use crate::error::{Error, Result};
use crate::fft::{hann, Fft};
#[allow(unused_imports)]
use crate::math::Float;

pub const STFT_WINDOW_S: f64 = 0.025;
pub const MEL_ENERGY_FLOOR: f64 = 1e-10;
pub const MEL_FMAX_HZ: f64 = 8000.0;

/// Centre frequencies of the bands used by [`mel_features`].
pub fn mel_band_centres(n_mels: usize) -> Vec<f64> {
    let top = hz_to_mel(MEL_FMAX_HZ);
    (1..=n_mels).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((10.0f64).powf(mel / 2595.0) - 1.0)
}

/// Triangular filters stored sparsely as `(first_bin, weights)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate_hz: f64, fmax_hz: f64) -> Self {
        let top = hz_to_mel(fmax_hz.min(sample_rate_hz / 2.0));
        let points: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect();
        let bin_hz = sample_rate_hz / n_fft as f64;
        let n_bins = n_fft / 2 + 1;
        let filters = (0..n_mels)
            .map(|m| {
                let (lo, c, hi) = (points[m], points[m + 1], points[m + 2]);
                let first = (lo / bin_hz).floor() as usize;
                let last = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
                let weights = (first..=last)
                    .map(|b| {
                        let f = b as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= c {
                            (f - lo) / (c - lo)
                        } else {
                            (hi - f) / (hi - c)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        Self { filters, centers_hz: points[1..=n_mels].to_vec() }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for ((first, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// Power spectra of centred Hann frames. Returns the spectra and the FFT size.
pub(crate) fn power_spectrogram(clip: &AudioClip) -> Result<(Vec<Vec<f64>>, usize)> {
    let sr = clip.sample_rate_hz() as f64;
    let win = (STFT_WINDOW_S * sr).round() as usize;
    let hop = (HOP_S * sr).round() as usize;
    if clip.len() < win {
        return Err(Error::ClipTooShort { needed_s: STFT_WINDOW_S, actual_s: clip.duration_s() });
    }
    let n_fft = win.next_power_of_two();
    let fft = Fft::new(n_fft);
    let window = hann(win);
    let mut frame = vec![0.0; win];
    let mut scratch = Vec::with_capacity(n_fft);
    let spectra = (0..frame_count(clip.len(), hop))
        .map(|k| {
            centred_frame(clip.samples(), k * hop, &mut frame);
            for (x, w) in frame.iter_mut().zip(&window) {
                *x *= w;
            }
            let mut p = Vec::with_capacity(n_fft / 2 + 1);
            fft.power_spectrum(&frame, &mut scratch, &mut p);
            p
        })
        .collect();
    Ok((spectra, n_fft))
}

/// Natural-log mel energies over 0-8 kHz, floored at `1e-10`.
pub fn mel_features(clip: &AudioClip, n_mels: usize) -> Result<MelMatrix> {
    if !(20..=128).contains(&n_mels) {
        return Err(Error::InvalidParameter(format!("n_mels = {n_mels} outside 20..=128")));
    }
    let (spectra, n_fft) = power_spectrogram(clip)?;
    let bank = MelFilterbank::new(n_mels, n_fft, clip.sample_rate_hz() as f64, MEL_FMAX_HZ);
    let frames = spectra
        .iter()
        .map(|p| {
            let mut row = vec![0.0; n_mels];
            bank.apply(p, &mut row);
            for v in &mut row {
                *v = v.max(MEL_ENERGY_FLOOR).ln();
            }
            row
        })
        .collect();
    Ok(MelMatrix { frames, n_mels, hop_s: (HOP_S * clip.sample_rate_hz() as f64).round() / clip.sample_rate_hz() as f64 })
}
