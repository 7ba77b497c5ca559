//! Cumulative-mean-normalised difference function pitch tracker (YIN family).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{centred_frame, frame_count, PitchContour, HOP_S};
use crate::audio::{rms, AudioClip};
use crate::error::{Error, Result};
use crate::math::hz_to_cents;
#[allow(unused_imports)]
use crate::math::Float;

pub const PITCH_WINDOW_S: f64 = 0.04;

/// First dip of the normalised difference below this value is taken as the period.
const DIP_THRESHOLD: f64 = 0.15;
/// Frames quieter than this RMS never count as voiced.
const ENERGY_GATE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchParams {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Minimum clarity (`1 - d'(tau)`) for a voiced frame.
    pub voicing_threshold: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        Self { fmin_hz: 65.0, fmax_hz: 1100.0, voicing_threshold: 0.35 }
    }
}

pub fn extract_f0(clip: &AudioClip, fmin_hz: f64, fmax_hz: f64) -> Result<PitchContour> {
    extract_f0_with(clip, &PitchParams { fmin_hz, fmax_hz, ..PitchParams::default() })
}

pub fn extract_f0_with(clip: &AudioClip, params: &PitchParams) -> Result<PitchContour> {
    let PitchParams { fmin_hz, fmax_hz, voicing_threshold } = *params;
    if !(40.0..1200.0).contains(&fmin_hz) || !(fmin_hz < fmax_hz && fmax_hz <= 1200.0) {
        return Err(Error::InvalidParameter(format!(
            "pitch range {fmin_hz}..{fmax_hz} Hz must satisfy 40 <= fmin < fmax <= 1200"
        )));
    }
    let sr = clip.sample_rate_hz() as f64;
    let win = (PITCH_WINDOW_S * sr).round() as usize;
    let hop = (HOP_S * sr).round() as usize;
    if clip.len() < win {
        return Err(Error::ClipTooShort { needed_s: PITCH_WINDOW_S, actual_s: clip.duration_s() });
    }
    let tau_min = ((sr / fmax_hz).floor() as usize).max(2);
    let tau_max = ((sr / fmin_hz).ceil() as usize).min(win - 2);
    let integration = win - tau_max - 1;

    let n_frames = frame_count(clip.len(), hop);
    let mut frame = vec![0.0; win];
    let mut diff = vec![0.0; tau_max + 2];
    let mut cmnd = vec![1.0; tau_max + 2];
    let mut f0_cents = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);

    for k in 0..n_frames {
        centred_frame(clip.samples(), k * hop, &mut frame);
        let estimate = if rms(&frame) < ENERGY_GATE {
            None
        } else {
            difference(&frame, integration, tau_max + 1, &mut diff);
            normalise(&diff, &mut cmnd);
            pick_period(&cmnd, tau_min, tau_max).and_then(|(tau, clarity)| {
                let f0 = sr / tau;
                (clarity >= voicing_threshold && f0 >= fmin_hz && f0 <= fmax_hz).then_some(f0)
            })
        };
        match estimate {
            Some(f0) => {
                f0_cents.push(quantise_cents(hz_to_cents(f0)));
                voiced.push(true);
            }
            None => {
                f0_cents.push(0.0);
                voiced.push(false);
            }
        }
    }

    Ok(PitchContour {
        frame_times_s: (0..n_frames).map(|k| k as f64 * hop as f64 / sr).collect(),
        f0_cents,
        voiced,
        hop_s: hop as f64 / sr,
    })
}

/// Snaps to a 1/1024-cent grid. Values on the grid survive whole-semitone shifts exactly,
/// which keeps transposition normalisation bit-reproducible.
pub fn quantise_cents(cents: f64) -> f64 {
    (cents * 1024.0).round() / 1024.0
}

/// `d(tau) = sum_j (x_j - x_{j+tau})^2` over a fixed integration length.
fn difference(x: &[f64], integration: usize, max_lag: usize, out: &mut [f64]) {
    out[0] = 0.0;
    for tau in 1..=max_lag.min(out.len() - 1) {
        let mut acc = 0.0;
        for j in 0..integration {
            let d = x[j] - x[j + tau];
            acc += d * d;
        }
        out[tau] = acc;
    }
}

fn normalise(diff: &[f64], out: &mut [f64]) {
    out[0] = 1.0;
    let mut running = 0.0;
    for tau in 1..diff.len() {
        running += diff[tau];
        out[tau] = if running > 0.0 { diff[tau] * tau as f64 / running } else { 1.0 };
    }
}

/// Returns the interpolated period in samples and the clarity at that lag.
fn pick_period(cmnd: &[f64], tau_min: usize, tau_max: usize) -> Option<(f64, f64)> {
    if tau_min >= tau_max {
        return None;
    }
    let mut best = None;
    let mut tau = tau_min;
    while tau <= tau_max {
        if cmnd[tau] < DIP_THRESHOLD {
            while tau < tau_max && cmnd[tau + 1] < cmnd[tau] {
                tau += 1;
            }
            best = Some(tau);
            break;
        }
        tau += 1;
    }
    let tau = best.unwrap_or_else(|| {
        (tau_min..=tau_max).min_by(|&a, &b| cmnd[a].total_cmp(&cmnd[b])).unwrap_or(tau_min)
    });
    let refined = if tau > 1 && tau + 1 < cmnd.len() {
        let (a, b, c) = (cmnd[tau - 1], cmnd[tau], cmnd[tau + 1]);
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            tau as f64 + (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            tau as f64
        }
    } else {
        tau as f64
    };
    Some((refined, (1.0 - cmnd[tau]).clamp(0.0, 1.0)))
}
