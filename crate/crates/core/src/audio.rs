//! Canonical waveforms: construction, downmix, resampling, loudness screening, segmentation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// Level reported for a digitally silent clip.
pub const SILENCE_DB: f64 = -120.0;

/// Segments shorter than this fraction of the nominal length are merged into their predecessor.
pub const TAIL_MERGE_FRACTION: f64 = 0.25;

/// Decoded mono waveform. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    id: String,
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    /// Validates that the clip is non-empty, finite, and inside [-1, 1].
    pub fn new(id: impl Into<String>, samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidSampleRate);
        }
        if samples.is_empty() {
            return Err(Error::EmptyClip);
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFiniteSample { index });
            }
            if value.abs() > 1.0 {
                return Err(Error::SampleOutOfRange { index, value });
            }
        }
        Ok(Self { id: id.into(), samples, sample_rate_hz })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_id(&self, id: impl Into<String>) -> Self {
        Self { id: id.into(), samples: self.samples.clone(), sample_rate_hz: self.sample_rate_hz }
    }

    /// Samples `[start, end)` as a new clip with the given id.
    pub fn slice(&self, id: impl Into<String>, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.samples.len());
        if start >= end {
            return Err(Error::EmptyClip);
        }
        Ok(Self {
            id: id.into(),
            samples: self.samples[start..end].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Converts to `target_rate_hz`. Same-rate input is returned untouched.
    pub fn resampled(&self, target_rate_hz: u32) -> Result<Self> {
        if target_rate_hz == 0 {
            return Err(Error::InvalidSampleRate);
        }
        if target_rate_hz == self.sample_rate_hz {
            return Ok(self.clone());
        }
        let samples = resample(&self.samples, self.sample_rate_hz, target_rate_hz);
        if samples.is_empty() {
            return Err(Error::EmptyClip);
        }
        Ok(Self { id: self.id.clone(), samples, sample_rate_hz: target_rate_hz })
    }
}

/// Averages interleaved channels into one.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect()
}

const ZERO_CROSSINGS: f64 = 24.0;
const PASSBAND: f64 = 0.94;
const MAX_PHASES: u64 = 2048;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Blackman-windowed sinc kernel evaluated at offset `x` (in input samples).
fn kernel(x: f64, cutoff: f64, half_width: f64) -> f64 {
    if x.abs() >= half_width {
        return 0.0;
    }
    let u = (x / half_width + 1.0) * 0.5;
    let w = 0.42 - 0.5 * (2.0 * PI * u).cos() + 0.08 * (4.0 * PI * u).cos();
    cutoff * sinc(cutoff * x) * w
}

/// Band-limited windowed-sinc sample-rate conversion. Output is clamped to [-1, 1].
pub fn resample(input: &[f64], from_hz: u32, to_hz: u32) -> Vec<f64> {
    if from_hz == to_hz {
        return input.to_vec();
    }
    let (from, to) = (from_hz as u64, to_hz as u64);
    let out_len = ((input.len() as u64 * to + from / 2) / from) as usize;
    let cutoff = PASSBAND * (to as f64 / from as f64).min(1.0);
    let half_width = ZERO_CROSSINGS / cutoff;
    let reach = half_width.ceil() as i64;
    let g = gcd(from, to);
    let (up, down) = (to / g, from / g);

    let tap = |n: usize, table: Option<&[f64]>| -> f64 {
        let pos = n as u64 * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let frac = phase as f64 / up as f64;
        let mut acc = 0.0;
        let lo = (base - reach + 1).max(0);
        let hi = (base + reach).min(input.len() as i64 - 1);
        for k in lo..=hi {
            let j = (k - base + reach - 1) as usize;
            let h = match table {
                Some(t) => t[phase * (2 * reach as usize) + j],
                None => kernel(frac + (base - k) as f64, cutoff, half_width),
            };
            acc += input[k as usize] * h;
        }
        acc.clamp(-1.0, 1.0)
    };

    if up <= MAX_PHASES {
        let width = 2 * reach as usize;
        let mut table = alloc::vec![0.0; up as usize * width];
        for phase in 0..up as usize {
            let frac = phase as f64 / up as f64;
            for j in 0..width {
                let k_minus_base = j as i64 - reach + 1;
                table[phase * width + j] = kernel(frac - k_minus_base as f64, cutoff, half_width);
            }
        }
        (0..out_len).map(|n| tap(n, Some(&table))).collect()
    } else {
        (0..out_len).map(|n| tap(n, None)).collect()
    }
}

/// Outcome of the loudness pre-screen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenVerdict {
    pub clip_id: String,
    pub rms_db: f64,
    pub passed: bool,
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Whole-file RMS level in dBFS against `floor_db`.
pub fn screen_volume(clip: &AudioClip, floor_db: f64) -> ScreenVerdict {
    let level = rms(clip.samples());
    let rms_db = if level > 0.0 { (20.0 * level.log10()).max(SILENCE_DB) } else { SILENCE_DB };
    ScreenVerdict { clip_id: clip.id().into(), rms_db, passed: rms_db >= floor_db }
}

/// Splits into consecutive `segment_s`-long pieces. A remainder shorter than a quarter segment
/// is folded into the last piece; a clip shorter than that comes back whole.
pub fn segment_clips(clip: &AudioClip, segment_s: f64) -> Result<Vec<AudioClip>> {
    if !segment_s.is_finite() || segment_s <= 0.0 {
        return Err(Error::InvalidParameter(format!("segment length {segment_s} must be positive")));
    }
    let bounds = segment_bounds(clip.len(), (segment_s * clip.sample_rate_hz() as f64).round() as usize);
    bounds
        .into_iter()
        .enumerate()
        .map(|(i, (start, end))| clip.slice(format!("{}_{:03}", clip.id(), i), start, end))
        .collect()
}

/// Sample ranges produced by [`segment_clips`].
pub fn segment_bounds(len: usize, seg_len: usize) -> Vec<(usize, usize)> {
    let seg_len = seg_len.max(1);
    let min_tail = (TAIL_MERGE_FRACTION * seg_len as f64).ceil() as usize;
    let full = len / seg_len;
    let rem = len % seg_len;
    if full == 0 {
        return alloc::vec![(0, len)];
    }
    let mut out: Vec<(usize, usize)> = (0..full).map(|i| (i * seg_len, (i + 1) * seg_len)).collect();
    if rem > 0 {
        if rem >= min_tail {
            out.push((full * seg_len, len));
        } else if let Some(last) = out.last_mut() {
            last.1 = len;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn clip_of(seconds: f64, rate: u32) -> AudioClip {
        let n = (seconds * rate as f64).round() as usize;
        let samples = (0..n).map(|i| ((i as f64) * 0.01).sin() * 0.5).collect();
        AudioClip::new("song", samples, rate).unwrap()
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert_eq!(AudioClip::new("a", vec![], 16_000), Err(Error::EmptyClip));
        assert_eq!(AudioClip::new("a", vec![0.0], 0), Err(Error::InvalidSampleRate));
        assert_eq!(AudioClip::new("a", vec![0.0, f64::NAN], 16_000), Err(Error::NonFiniteSample { index: 1 }));
        assert!(matches!(AudioClip::new("a", vec![1.5], 16_000), Err(Error::SampleOutOfRange { index: 0, .. })));
    }

    #[test]
    fn duration_is_length_over_rate() {
        let c = clip_of(2.5, 16_000);
        assert_eq!(c.len(), 40_000);
        assert!((c.duration_s() - 2.5).abs() < 1.0 / 16_000.0);
    }

    #[test]
    fn resample_exact_ratio_length() {
        let input = vec![0.0; 441_000];
        assert_eq!(resample(&input, 44_100, 16_000).len(), 160_000);
    }

    #[test]
    fn same_rate_is_bit_identical() {
        let c = clip_of(0.5, 16_000);
        assert_eq!(c.resampled(16_000).unwrap().samples(), c.samples());
    }

    #[test]
    fn resampled_sine_keeps_its_frequency() {
        let src: Vec<f64> = (0..44_100).map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / 44_100.0).sin()).collect();
        let out = resample(&src, 44_100, 16_000);
        assert_eq!(out.len(), 16_000);
        // Direct DFT magnitude on a 0.5 Hz grid around the tone.
        let dft = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, x) in out.iter().enumerate() {
                let ph = 2.0 * PI * f * n as f64 / 16_000.0;
                re += x * ph.cos();
                im -= x * ph.sin();
            }
            re * re + im * im
        };
        let peak = (0..=40).map(|k| 990.0 + 0.5 * k as f64).max_by(|a, b| dft(*a).total_cmp(&dft(*b))).unwrap();
        assert!((peak - 1000.0).abs() <= 2.0, "peak at {peak}");
    }

    #[test]
    fn downmix_averages_channels() {
        assert_eq!(downmix(&[1.0, 0.0, 0.5, 0.5], 2), vec![0.5, 0.5]);
    }

    #[test]
    fn silence_screen() {
        let c = AudioClip::new("z", vec![0.0; 1600], 16_000).unwrap();
        let v = screen_volume(&c, -60.0);
        assert_eq!(v.rms_db, -120.0);
        assert!(!v.passed);
    }

    #[test]
    fn square_wave_is_zero_db() {
        let s = (0..1600).map(|i| if (i / 20) % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let v = screen_volume(&AudioClip::new("sq", s, 16_000).unwrap(), -60.0);
        assert!(v.rms_db.abs() < 1e-12);
        assert!(v.passed);
    }

    #[test]
    fn sine_level_matches_closed_form() {
        // 0.1-amplitude, 100 Hz over an integer number of periods.
        let s: Vec<f64> = (0..16_000).map(|i| 0.1 * (2.0 * PI * 100.0 * i as f64 / 16_000.0).sin()).collect();
        let direct = 20.0 * (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt().log10();
        let closed = 20.0 * (0.1 / 2.0f64.sqrt()).log10();
        assert!((direct - closed).abs() < 1e-9);
        let v = screen_volume(&AudioClip::new("sine", s, 16_000).unwrap(), -30.0);
        assert!((v.rms_db - -23.0103).abs() < 1e-3);
        assert!(v.passed);
    }

    fn seg_seconds(clip: &AudioClip, segs: &[AudioClip]) -> Vec<f64> {
        segs.iter().map(|s| s.len() as f64 / clip.sample_rate_hz() as f64).collect()
    }

    #[test]
    fn short_tail_merges() {
        let c = clip_of(95.0, 100);
        let segs = segment_clips(&c, 30.0).unwrap();
        assert_eq!(seg_seconds(&c, &segs), vec![30.0, 30.0, 35.0]);
        assert_eq!(segs[2].id(), "song_002");
    }

    #[test]
    fn even_split() {
        let c = clip_of(60.0, 100);
        let segs = segment_clips(&c, 30.0).unwrap();
        assert_eq!(seg_seconds(&c, &segs), vec![30.0, 30.0]);
        let joined: Vec<f64> = segs.iter().flat_map(|s| s.samples().iter().copied()).collect();
        assert_eq!(joined, c.samples());
    }

    #[test]
    fn long_tail_kept_and_reassembles() {
        let c = clip_of(100.0, 100);
        let segs = segment_clips(&c, 30.0).unwrap();
        assert_eq!(seg_seconds(&c, &segs), vec![30.0, 30.0, 30.0, 10.0]);
        // Boundary samples enumerated by hand: 0, 3000, 6000, 9000, 10000.
        let expected = [(0, 3000), (3000, 6000), (6000, 9000), (9000, 10_000)];
        assert_eq!(segment_bounds(10_000, 3000), expected);
        let mut offset = 0;
        for s in &segs {
            assert_eq!(s.samples(), &c.samples()[offset..offset + s.len()]);
            offset += s.len();
        }
        assert_eq!(offset, c.len());
    }

    #[test]
    fn clip_shorter_than_quarter_segment_is_single() {
        let c = clip_of(5.0, 100);
        let segs = segment_clips(&c, 30.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].samples(), c.samples());
        assert!(segment_clips(&c, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn segments_cover_source(len in 1usize..5000, seg in 1usize..700) {
            let b = segment_bounds(len, seg);
            prop_assert_eq!(b[0].0, 0);
            prop_assert_eq!(b.last().unwrap().1, len);
            for w in b.windows(2) {
                prop_assert_eq!(w[0].1, w[1].0);
            }
        }

        #[test]
        fn gain_never_lowers_level(g in 1.0f64..4.0, amp in 0.01f64..0.25) {
            let s: Vec<f64> = (0..800).map(|i| amp * ((i as f64) * 0.37).sin()).collect();
            let louder: Vec<f64> = s.iter().map(|x| x * g).collect();
            let a = screen_volume(&AudioClip::new("a", s, 16_000).unwrap(), -50.0).rms_db;
            let b = screen_volume(&AudioClip::new("b", louder, 16_000).unwrap(), -50.0).rms_db;
            prop_assert!(b >= a);
        }
    }
}
