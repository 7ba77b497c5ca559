//! Seeded synthetic sung takes: harmonic voice model, melody generator, and the
//! degradations used by tests and demos.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[allow(unused_imports)]
use crate::math::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::AudioClip;
use crate::CANONICAL_RATE_HZ;

const SR: f64 = CANONICAL_RATE_HZ as f64;
const MAX_PARTIAL_HZ: f64 = 7_000.0;
const ATTACK_S: f64 = 0.03;
const RELEASE_S: f64 = 0.04;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Note {
    pub start_s: f64,
    pub duration_s: f64,
    /// Fractional MIDI pitch.
    pub midi: f64,
    pub phrase_end: bool,
}

impl Note {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub amplitude: f64,
    pub vibrato_depth_cents: f64,
    pub vibrato_rate_hz: f64,
    /// Standard deviation of slow pitch wander inside each note.
    pub pitch_jitter_cents: f64,
    /// Partial `k` has amplitude `k^-rolloff`.
    pub harmonic_rolloff: f64,
    /// Breath-noise level relative to the voiced signal.
    pub noise_level: f64,
    /// Per-note loudness spread, in dB.
    pub loudness_spread_db: f64,
    /// Pitch fall over the last note of each phrase.
    pub phrase_end_droop_cents: f64,
}

impl Voice {
    pub fn clean() -> Self {
        Self {
            amplitude: 0.3,
            vibrato_depth_cents: 12.0,
            vibrato_rate_hz: 5.5,
            pitch_jitter_cents: 2.0,
            harmonic_rolloff: 1.2,
            noise_level: 0.005,
            loudness_spread_db: 2.0,
            phrase_end_droop_cents: 0.0,
        }
    }

    /// Interpolates from a very poor voice at `quality = 0` to [`Voice::clean`] at 1.
    pub fn with_quality(quality: f64) -> Self {
        let q = quality.clamp(0.0, 1.0);
        let bad = 1.0 - q;
        let c = Self::clean();
        Self {
            amplitude: c.amplitude,
            vibrato_depth_cents: c.vibrato_depth_cents * q + 35.0 * bad * bad,
            vibrato_rate_hz: c.vibrato_rate_hz + 1.5 * bad,
            pitch_jitter_cents: c.pitch_jitter_cents + 40.0 * bad,
            harmonic_rolloff: c.harmonic_rolloff + 1.3 * bad,
            noise_level: c.noise_level + 0.6 * bad,
            loudness_spread_db: c.loudness_spread_db * q + 0.5 * bad,
            phrase_end_droop_cents: 120.0 * bad,
        }
    }
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Phrases of 3 to 6 notes around G3 to D5, each note 0.6 to 0.8 s long.
pub fn random_melody(seed: u64, total_s: f64) -> Vec<Note> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = [-5.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 5.0];
    let mut notes = Vec::new();
    let mut t = 0.25;
    let mut midi: f64 = 62.0;
    'outer: loop {
        let len = rng.random_range(3..=6);
        for k in 0..len {
            let slot = rng.random_range(0.6..0.8);
            let gap = rng.random_range(0.08..0.14);
            if t + slot > total_s - 0.25 {
                if let Some(last) = notes.last_mut() {
                    let last: &mut Note = last;
                    last.phrase_end = true;
                }
                break 'outer;
            }
            midi = (midi + steps[rng.random_range(0..steps.len())]).clamp(55.0, 74.0);
            notes.push(Note { start_s: t, duration_s: slot - gap, midi, phrase_end: k + 1 == len });
            t += slot;
        }
        t += rng.random_range(0.35..0.6);
    }
    notes
}

/// Shifts each note's pitch by the matching entry of `cents`.
pub fn detune(notes: &[Note], cents: &[f64]) -> Vec<Note> {
    notes.iter().zip(cents.iter().chain(core::iter::repeat(&0.0))).map(|(n, c)| Note { midi: n.midi + c / 100.0, ..*n }).collect()
}

pub fn transpose(notes: &[Note], semitones: f64) -> Vec<Note> {
    notes.iter().map(|n| Note { midi: n.midi + semitones, ..*n }).collect()
}

/// Moves each note start by the matching offset, keeping note ends fixed and a
/// minimum note length and gap.
pub fn shift_onsets(notes: &[Note], offsets_s: &[f64]) -> Vec<Note> {
    let mut out: Vec<Note> = Vec::with_capacity(notes.len());
    for (i, n) in notes.iter().enumerate() {
        let end = n.end_s();
        let floor = out.last().map_or(0.02, |p| p.end_s() + 0.03);
        let start = (n.start_s + offsets_s.get(i).copied().unwrap_or(0.0)).max(floor).min(end - 0.15);
        out.push(Note { start_s: start, duration_s: end - start, ..*n });
    }
    out
}

/// Standard-normal draws, one per note, from `seed`.
pub fn unit_offsets(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gauss(&mut rng)).collect()
}

/// A voice that applies from `start_s` until the next section.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub start_s: f64,
    pub voice: Voice,
}

pub fn render(id: impl Into<String>, notes: &[Note], voice: &Voice, seed: u64) -> AudioClip {
    render_sections(id, notes, &[Section { start_s: 0.0, voice: voice.clone() }], seed)
}

/// Renders notes with the voice of the section each note starts in.
pub fn render_sections(id: impl Into<String>, notes: &[Note], sections: &[Section], seed: u64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_s = notes.iter().map(Note::end_s).fold(0.0, f64::max) + 0.3;
    let mut out = vec![0.0f64; (total_s * SR).ceil() as usize];
    let mut hp_state = (0.0f64, 0.0f64);
    for note in notes {
        let voice = sections
            .iter()
            .rev()
            .find(|s| s.start_s <= note.start_s)
            .map_or_else(|| &sections[0].voice, |s| &s.voice);
        let gain = voice.amplitude * 10f64.powf(voice.loudness_spread_db * gauss(&mut rng) / 20.0);
        let first = (note.start_s * SR).round() as usize;
        let len = (note.duration_s * SR).round() as usize;
        let vib_phase = rng.random_range(0.0..TAU);
        // Slow wander: a smoothed random walk re-normalised to the requested spread.
        let knots = (note.duration_s / 0.05).ceil() as usize + 2;
        let wander: Vec<f64> = (0..knots).map(|_| gauss(&mut rng) * voice.pitch_jitter_cents).collect();
        let base_hz = 440.0 * 2f64.powf((note.midi - 69.0) / 12.0);
        let partials = ((MAX_PARTIAL_HZ / (base_hz * 1.1)).floor() as usize).clamp(1, 40);
        let weights: Vec<f64> = (1..=partials).map(|k| (k as f64).powf(-voice.harmonic_rolloff)).collect();
        let norm: f64 = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        let mut phase = rng.random_range(0.0..TAU);
        for i in 0..len {
            let idx = first + i;
            if idx >= out.len() {
                break;
            }
            let t = i as f64 / SR;
            let pos = t / 0.05;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let smooth = 0.5 - 0.5 * (core::f64::consts::PI * frac).cos();
            let mut cents = wander[k] * (1.0 - smooth) + wander[k + 1] * smooth;
            cents += voice.vibrato_depth_cents * (TAU * voice.vibrato_rate_hz * t + vib_phase).sin();
            if note.phrase_end {
                cents -= voice.phrase_end_droop_cents * t / note.duration_s;
            }
            let f = base_hz * 2f64.powf(cents / 1200.0);
            phase = (phase + TAU * f / SR) % TAU;
            let (s1, c1) = phase.sin_cos();
            let (mut prev, mut cur) = (0.0, s1);
            let mut sample = 0.0;
            for (j, w) in weights.iter().enumerate() {
                if j > 0 {
                    let next = 2.0 * c1 * cur - prev;
                    prev = cur;
                    cur = next;
                }
                sample += w * cur;
            }
            let env = envelope(t, note.duration_s);
            let noise = {
                let x: f64 = rng.random_range(-1.0..1.0);
                let y = x - hp_state.0 + 0.95 * hp_state.1;
                hp_state = (x, y);
                y
            };
            out[idx] += gain * env * (sample / norm + voice.noise_level * 1.7 * noise);
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.95 {
        out.iter_mut().for_each(|v| *v *= 0.95 / peak);
    }
    AudioClip::new(id, out, CANONICAL_RATE_HZ).expect("finite, in range")
}

fn envelope(t: f64, dur: f64) -> f64 {
    let rise = (t / ATTACK_S).min(1.0);
    let fall = ((dur - t) / RELEASE_S).clamp(0.0, 1.0);
    let e = rise.min(fall);
    0.5 - 0.5 * (core::f64::consts::PI * e).cos()
}

/// A pure tone, for tests.
pub fn sine(id: impl Into<String>, hz: f64, amplitude: f64, duration_s: f64) -> AudioClip {
    let n = (duration_s * SR).round() as usize;
    let samples = (0..n).map(|i| amplitude * (TAU * hz * i as f64 / SR).sin()).collect();
    AudioClip::new(id, samples, CANONICAL_RATE_HZ).expect("finite, in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::extract_f0;

    #[test]
    fn melody_is_well_formed() {
        let m = random_melody(3, 20.0);
        assert!(m.len() > 10);
        for w in m.windows(2) {
            assert!(w[1].start_s >= w[0].end_s() + 0.05);
        }
        assert!(m.iter().all(|n| (0.45..0.75).contains(&n.duration_s) && (55.0..=74.0).contains(&n.midi)));
        assert!(m.last().unwrap().end_s() <= 20.0);
        assert_eq!(m, random_melody(3, 20.0));
    }

    #[test]
    fn rendered_pitch_follows_notes() {
        let notes = [Note { start_s: 0.2, duration_s: 0.6, midi: 57.0, phrase_end: false }];
        let mut v = Voice::clean();
        v.vibrato_depth_cents = 0.0;
        v.pitch_jitter_cents = 0.0;
        let clip = render("a", &notes, &v, 1);
        let f0 = extract_f0(&clip, 65.0, 1100.0).unwrap();
        let mid = f0.get(50).expect("voiced mid-note");
        assert!((mid - 5700.0).abs() < 5.0, "{mid}");
        assert!(f0.get(5).is_none());
    }

    #[test]
    fn deterministic_and_bounded() {
        let notes = random_melody(1, 8.0);
        let a = render("x", &notes, &Voice::with_quality(0.0), 9);
        let b = render("x", &notes, &Voice::with_quality(0.0), 9);
        assert_eq!(a.samples(), b.samples());
        assert!(a.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn onset_shift_keeps_order() {
        let notes = random_melody(2, 10.0);
        let offs: Vec<f64> = unit_offsets(4, notes.len()).iter().map(|z| z * 0.15).collect();
        let moved = shift_onsets(&notes, &offs);
        for (w, n) in moved.windows(2).zip(&notes[1..]) {
            assert!(w[1].start_s > w[0].end_s());
            assert!((w[1].end_s() - n.end_s()).abs() < 1e-12);
        }
    }
}
