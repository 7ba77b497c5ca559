//! Reference-based scoring of a take against the original vocal.
//!
//! Scores are on a 0..100 screening scale. The chain is: transposition normalisation
//! (whole-semitone median offset), banded DTW on pitch contours, then pitch, rhythm, and
//! timbre scores combined with configurable weights.

mod dtw;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use dtw::{dtw_align, frame_cost, DtwAlignment, COST_CAP_CENTS, VOICING_MISMATCH_CENTS};

use crate::audio::AudioClip;
use crate::config::{FeatureConfig, RuleSignalConfig};
use crate::error::{Error, Result};
use crate::features::{extract_take, MelMatrix, OnsetSequence, PitchContour, TakeFeatures};
use crate::math::median;
#[allow(unused_imports)]
use crate::math::Float;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchAnnotation {
    pub time_s: f64,
    pub deviation_cents: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhythmAnnotation {
    pub time_s: f64,
    pub offset_s: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSignalReport {
    pub clip_id: String,
    /// Reference the take was compared against; groups takes of the same song.
    pub reference_id: String,
    pub pitch_score: f64,
    pub rhythm_score: f64,
    pub timbre_score: f64,
    pub combined: f64,
    pub transposition_offset_cents: f64,
    pub pitch_annotations: Vec<PitchAnnotation>,
    pub rhythm_annotations: Vec<RhythmAnnotation>,
    pub timbre_badge: String,
}

/// "0.8 Semitones Lower" style label for a signed deviation in cents.
pub fn pitch_label(deviation_cents: f64) -> String {
    let dir = if deviation_cents < 0.0 { "Lower" } else { "Higher" };
    format!("{:.1} Semitones {dir}", deviation_cents.abs() / 100.0)
}

/// "0.12 Seconds Early" style label for a signed onset offset (user minus reference).
pub fn rhythm_label(offset_s: f64) -> String {
    let dir = if offset_s < 0.0 { "Early" } else { "Late" };
    format!("{:.2} Seconds {dir}", offset_s.abs())
}

pub fn timbre_badge(score: f64) -> &'static str {
    if score >= 90.0 {
        "Perfect"
    } else if score >= 75.0 {
        "Good"
    } else if score >= 50.0 {
        "Fair"
    } else {
        "Poor"
    }
}

/// Removes the whole-semitone part of the median pitch difference from the user contour.
pub fn normalize_transposition(user: &PitchContour, reference: &PitchContour) -> Result<(PitchContour, f64)> {
    let (u, r) = (user.voiced_cents(), reference.voiced_cents());
    if u.is_empty() || r.is_empty() {
        return Err(Error::Unvoiced);
    }
    let offset = ((median(&u) - median(&r)) / 100.0).round() * 100.0;
    Ok((user.shifted(-offset), offset))
}

/// `max(0, 100 - mean_deviation / 5)` plus one annotation per sustained same-sign deviation run.
pub fn pitch_accuracy(align: &DtwAlignment, cfg: &RuleSignalConfig) -> (f64, Vec<PitchAnnotation>) {
    let score = (100.0 - align.mean_deviation_cents / 5.0).max(0.0);
    let mut notes = Vec::new();
    let mut run: Vec<(usize, f64)> = Vec::new();
    let mut flush = |run: &mut Vec<(usize, f64)>| {
        if let (Some(first), Some(last)) = (run.first(), run.last()) {
            let dur = (last.0 - first.0 + 1) as f64 * align.hop_s;
            if dur + 1e-9 >= cfg.pitch_annotation_min_run_s {
                let d = run.iter().map(|x| x.1).sum::<f64>() / run.len() as f64;
                notes.push(PitchAnnotation { time_s: first.0 as f64 * align.hop_s, deviation_cents: d, label: pitch_label(d) });
            }
        }
        run.clear();
    };
    for (&(ui, _), dev) in align.path.iter().zip(&align.deviations) {
        match dev {
            Some(d) if d.abs() >= cfg.pitch_annotation_cents => {
                if run.last().is_some_and(|last| last.1.signum() != d.signum()) {
                    flush(&mut run);
                }
                run.push((ui, *d));
            }
            _ => flush(&mut run),
        }
    }
    flush(&mut run);
    (score, notes)
}

/// Greedy time-ordered onset matching and the miss/offset score.
pub fn rhythm_accuracy(
    user: &OnsetSequence,
    reference: &OnsetSequence,
    tol_s: f64,
    annotate_s: f64,
) -> Result<(f64, Vec<RhythmAnnotation>)> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    if tol_s.is_nan() || tol_s <= 0.0 {
        return Err(Error::InvalidParameter(format!("onset tolerance {tol_s} must be positive")));
    }
    let mut used = vec![false; user.len()];
    let mut offsets = Vec::new();
    let mut notes = Vec::new();
    for &r in &reference.onset_times_s {
        let best = user
            .onset_times_s
            .iter()
            .enumerate()
            .filter(|(k, &u)| !used[*k] && (u - r).abs() <= tol_s)
            .min_by(|a, b| (a.1 - r).abs().total_cmp(&(b.1 - r).abs()));
        if let Some((k, &u)) = best {
            used[k] = true;
            let off = u - r;
            offsets.push(off.abs());
            if off.abs() >= annotate_s {
                notes.push(RhythmAnnotation { time_s: r, offset_s: off, label: rhythm_label(off) });
            }
        }
    }
    let matched = offsets.len() as f64;
    let mean_abs = if offsets.is_empty() { 0.0 } else { offsets.iter().sum::<f64>() / matched };
    let miss = (reference.len() as f64 - matched) / reference.len() as f64;
    Ok(((100.0 * (1.0 - miss) - mean_abs / tol_s * 20.0).max(0.0), notes))
}

/// Mean/variance normalises a vector in place; returns `false` for a flat vector.
fn standardise(v: &[f64], out: &mut Vec<f64>) -> bool {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
    out.clear();
    if sd < 1e-9 {
        out.resize(v.len(), 0.0);
        return false;
    }
    out.extend(v.iter().map(|x| (x - m) / sd));
    true
}

/// Cosine similarity of normalised mel frames along the path, as 0..100 plus a badge.
pub fn timbre_consistency(user: &MelMatrix, reference: &MelMatrix, align: &DtwAlignment) -> Result<(f64, String)> {
    if align.path.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let mut total = 0.0;
    for &(i, j) in &align.path {
        if i >= user.len() || j >= reference.len() {
            return Err(Error::AlignmentOutOfRange { user: i, reference: j });
        }
        let sa = standardise(&user.frames[i], &mut a);
        let sb = standardise(&reference.frames[j], &mut b);
        total += match (sa, sb) {
            (false, false) => 1.0,
            (true, true) => a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64,
            _ => 0.0,
        };
    }
    let score = (100.0 * total / align.path.len() as f64).clamp(0.0, 100.0);
    Ok((score, timbre_badge(score).into()))
}

/// Scores already-extracted features of a take against its reference.
pub fn score_takes(user: &TakeFeatures, reference: &TakeFeatures, cfg: &RuleSignalConfig) -> Result<RuleSignalReport> {
    let weight_sum = cfg.pitch_weight + cfg.rhythm_weight + cfg.timbre_weight;
    if (weight_sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("score weights sum to {weight_sum}, not 1")));
    }
    let (normalised, offset) = normalize_transposition(&user.contour, &reference.contour)?;
    let floor = (cfg.band_s / user.contour.hop_s).round() as usize;
    let band = floor.max(user.contour.len().abs_diff(reference.contour.len()));
    let align = dtw_align(&normalised, &reference.contour, band)?;
    let (pitch_score, pitch_annotations) = pitch_accuracy(&align, cfg);
    let (rhythm_score, rhythm_annotations) =
        rhythm_accuracy(&user.onsets, &reference.onsets, cfg.onset_tolerance_s, cfg.rhythm_annotation_s)?;
    let (timbre_score, badge) = timbre_consistency(&user.mel, &reference.mel, &align)?;
    Ok(RuleSignalReport {
        clip_id: user.clip_id.clone(),
        reference_id: reference.clip_id.clone(),
        pitch_score,
        rhythm_score,
        timbre_score,
        combined: cfg.pitch_weight * pitch_score + cfg.rhythm_weight * rhythm_score + cfg.timbre_weight * timbre_score,
        transposition_offset_cents: offset,
        pitch_annotations,
        rhythm_annotations,
        timbre_badge: badge,
    })
}

/// Full chain from waveforms.
pub fn rulesignal_report(
    user: &AudioClip,
    reference: &AudioClip,
    features: &FeatureConfig,
    cfg: &RuleSignalConfig,
) -> Result<RuleSignalReport> {
    score_takes(&extract_take(user, features)?, &extract_take(reference, features)?, cfg)
}

fn ranked(reports: &[&RuleSignalReport]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..reports.len()).collect();
    idx.sort_by(|&a, &b| {
        reports[b].combined.total_cmp(&reports[a].combined).then_with(|| reports[a].clip_id.cmp(&reports[b].clip_id))
    });
    idx
}

fn keep_count(n: usize, keep_fraction: f64) -> usize {
    ((keep_fraction * n as f64).round() as usize).clamp(1, n)
}

/// Ids of the top `round(fraction * N)` reports (at least one), best first.
pub fn prescreen(reports: &[RuleSignalReport], keep_fraction: f64) -> Result<Vec<String>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("keep fraction {keep_fraction} outside (0, 1]")));
    }
    let refs: Vec<&RuleSignalReport> = reports.iter().collect();
    let order = ranked(&refs);
    Ok(order.into_iter().take(keep_count(reports.len(), keep_fraction)).map(|i| refs[i].clip_id.clone()).collect())
}

/// Applies the keep fraction separately within each reference song, then orders globally.
pub fn prescreen_per_song(reports: &[RuleSignalReport], keep_fraction: f64) -> Result<Vec<String>> {
    if reports.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut groups: BTreeMap<&str, Vec<RuleSignalReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(&r.reference_id).or_default().push(r.clone());
    }
    let mut kept: Vec<&RuleSignalReport> = Vec::new();
    for group in groups.values() {
        let ids = prescreen(group, keep_fraction)?;
        kept.extend(group.iter().filter(|r| ids.contains(&r.clip_id)));
    }
    let order = ranked(&kept);
    Ok(order.into_iter().map(|i| kept[i].clip_id.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cfg() -> RuleSignalConfig {
        RuleSignalConfig::default()
    }

    fn contour(values: &[Option<f64>]) -> PitchContour {
        PitchContour::from_frames(values, 0.01)
    }

    fn melody(n: usize) -> Vec<Option<f64>> {
        (0..n).map(|k| if k % 25 < 3 { None } else { Some(5500.0 + 100.0 * ((k / 25) % 7) as f64) }).collect()
    }

    #[test]
    fn octave_shift_is_removed() {
        let r = contour(&melody(200));
        let (n, off) = normalize_transposition(&r.shifted(1200.0), &r).unwrap();
        assert_eq!(off, 1200.0);
        assert_eq!(n, r);
        let (n, off) = normalize_transposition(&r, &r).unwrap();
        assert_eq!((off, n), (0.0, r.clone()));
    }

    #[test]
    fn offset_rounds_to_semitones() {
        let r = contour(&melody(200));
        let (n, off) = normalize_transposition(&r.shifted(540.0), &r).unwrap();
        assert_eq!(off, 500.0);
        for k in 0..r.len() {
            if let (Some(a), Some(b)) = (n.get(k), r.get(k)) {
                assert!((a - b - 40.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unvoiced_contour_is_an_error() {
        let r = contour(&melody(50));
        let silent = contour(&[None; 50]);
        assert_eq!(normalize_transposition(&silent, &r), Err(Error::Unvoiced));
        assert_eq!(normalize_transposition(&r, &silent), Err(Error::Unvoiced));
    }

    fn straight(devs: &[Option<f64>]) -> DtwAlignment {
        let capped: Vec<f64> = devs.iter().flatten().map(|d| d.abs().min(600.0)).collect();
        DtwAlignment {
            path: (0..devs.len()).map(|k| (k, k)).collect(),
            total_cost_cents: 0.0,
            mean_deviation_cents: if capped.is_empty() { 0.0 } else { capped.iter().sum::<f64>() / capped.len() as f64 },
            deviations: devs.to_vec(),
            hop_s: 0.01,
        }
    }

    #[test]
    fn perfect_pitch() {
        let (s, notes) = pitch_accuracy(&straight(&[Some(0.0); 100]), &cfg());
        assert_eq!(s, 100.0);
        assert!(notes.is_empty());
    }

    #[test]
    fn flat_run_gets_semitone_label() {
        let (s, notes) = pitch_accuracy(&straight(&[Some(-80.0); 200]), &cfg());
        assert!((s - 84.0).abs() < 1e-12);
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].label, "0.8 Semitones Lower");
        assert_eq!(notes[0].time_s, 0.0);
        assert_eq!(pitch_label(notes[0].deviation_cents), notes[0].label);
    }

    #[test]
    fn short_or_small_runs_are_silent() {
        let mut devs = vec![Some(0.0); 100];
        for d in devs.iter_mut().skip(10).take(20) {
            *d = Some(90.0);
        }
        for d in devs.iter_mut().skip(50).take(40) {
            *d = Some(49.0);
        }
        assert!(pitch_accuracy(&straight(&devs), &cfg()).1.is_empty());
        for d in devs.iter_mut().skip(10).take(40) {
            *d = Some(120.0);
        }
        let notes = pitch_accuracy(&straight(&devs), &cfg()).1;
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].label, "1.2 Semitones Higher");
    }

    #[test]
    fn score_clamps_at_zero() {
        assert_eq!(pitch_accuracy(&straight(&[Some(500.0); 10]), &cfg()).0, 0.0);
    }

    fn onsets(v: &[f64]) -> OnsetSequence {
        OnsetSequence::new(v.to_vec())
    }

    #[test]
    fn exact_rhythm() {
        let r: Vec<f64> = (0..10).map(|k| 0.5 + k as f64).collect();
        let (s, notes) = rhythm_accuracy(&onsets(&r), &onsets(&r), 0.25, 0.08).unwrap();
        assert_eq!(s, 100.0);
        assert!(notes.is_empty());
    }

    #[test]
    fn one_early_onset() {
        let r: Vec<f64> = (0..10).map(|k| 0.5 + k as f64).collect();
        let mut u = r.clone();
        u[3] -= 0.12;
        let (s, notes) = rhythm_accuracy(&onsets(&u), &onsets(&r), 0.25, 0.08).unwrap();
        // D = 0.12 / 10 = 0.012 -> 100 - 0.048 * 20.
        assert!((s - 99.04).abs() < 1e-9);
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].label, "0.12 Seconds Early");
        assert_eq!(rhythm_label(notes[0].offset_s), notes[0].label);
    }

    /// Largest number of disjoint (ref, user) pairs within tolerance, by exhaustive search.
    fn max_matching(u: &[f64], r: &[f64], tol: f64) -> usize {
        fn go(u: &[f64], r: &[f64], tol: f64, used: &mut Vec<bool>, i: usize) -> usize {
            if i == r.len() {
                return 0;
            }
            let mut best = go(u, r, tol, used, i + 1);
            for k in 0..u.len() {
                if !used[k] && (u[k] - r[i]).abs() <= tol {
                    used[k] = true;
                    best = best.max(1 + go(u, r, tol, used, i + 1));
                    used[k] = false;
                }
            }
            best
        }
        go(u, r, tol, &mut vec![false; u.len()], 0)
    }

    #[test]
    fn half_missing_scores_fifty() {
        let r = [0.5, 1.5, 2.5, 3.5, 4.5, 5.5];
        let u = [0.5, 2.5, 4.5];
        let (s, _) = rhythm_accuracy(&onsets(&u), &onsets(&r), 0.25, 0.08).unwrap();
        assert_eq!(s, 50.0);
        assert_eq!(max_matching(&u, &r, 0.25), 3);
    }

    #[test]
    fn greedy_matching_agrees_with_exhaustive_on_separated_onsets() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let r: Vec<f64> = (0..6).map(|k| 1.0 + k as f64).collect();
            let mut u = Vec::new();
            for t in &r {
                if rng.random_bool(0.7) {
                    u.push(t + rng.random_range(-0.4..0.4));
                }
            }
            let u = OnsetSequence::new(u);
            let (s, _) = rhythm_accuracy(&u, &onsets(&r), 0.25, 0.08).unwrap();
            let m = max_matching(&u.onset_times_s, &r, 0.25);
            // Score bounds follow from the matched count: 100m/6 minus at most 20.
            let upper = 100.0 * m as f64 / 6.0;
            assert!(s <= upper + 1e-9 && s >= upper - 20.0 - 1e-9);
        }
    }

    #[test]
    fn rhythm_contract() {
        assert_eq!(rhythm_accuracy(&onsets(&[1.0]), &onsets(&[]), 0.25, 0.08), Err(Error::EmptyReference));
        assert!(rhythm_accuracy(&onsets(&[1.0]), &onsets(&[1.0]), 0.0, 0.08).is_err());
    }

    #[test]
    fn rhythm_score_falls_with_misses() {
        let r: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let mut last = f64::INFINITY;
        for drop in 0..=8 {
            let s = rhythm_accuracy(&onsets(&r[drop..]), &onsets(&r), 0.25, 0.08).map(|x| x.0).unwrap_or(0.0);
            assert!(s <= last);
            last = s;
        }
    }

    fn mel(rows: Vec<Vec<f64>>) -> MelMatrix {
        MelMatrix { n_mels: rows[0].len(), frames: rows, hop_s: 0.01 }
    }

    #[test]
    fn identical_and_gained_mels_are_perfect() {
        let rows: Vec<Vec<f64>> = (0..50).map(|k| (0..20).map(|b| ((k * b) as f64 * 0.1).sin()).collect()).collect();
        let align = straight(&vec![Some(0.0); 50]);
        let (s, badge) = timbre_consistency(&mel(rows.clone()), &mel(rows.clone()), &align).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
        assert_eq!(badge, "Perfect");
        // A constant gain is an additive offset in the log domain.
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v + 2.0f64.ln()).collect()).collect();
        assert!((timbre_consistency(&mel(shifted), &mel(rows), &align).unwrap().0 - 100.0).abs() < 1e-9);
    }

    #[test]
    fn random_mels_score_poorly() {
        for seed in 0..5 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let tonal: Vec<Vec<f64>> = (0..200).map(|_| (0..40).map(|b| -0.2 * b as f64).collect()).collect();
            let noise: Vec<Vec<f64>> = (0..200).map(|_| (0..40).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let (s, badge) = timbre_consistency(&mel(noise), &mel(tonal), &straight(&vec![None; 200])).unwrap();
            assert!(s < 50.0);
            assert_eq!(badge, "Poor");
        }
    }

    #[test]
    fn out_of_range_alignment() {
        let m = mel(vec![vec![0.0, 1.0]; 3]);
        let mut a = straight(&[None; 4]);
        a.path = vec![(0, 0), (3, 1)];
        assert_eq!(timbre_consistency(&m, &m, &a), Err(Error::AlignmentOutOfRange { user: 3, reference: 1 }));
    }

    fn report(id: &str, combined: f64) -> RuleSignalReport {
        RuleSignalReport {
            clip_id: id.into(),
            reference_id: String::from("song"),
            pitch_score: combined,
            rhythm_score: combined,
            timbre_score: combined,
            combined,
            transposition_offset_cents: 0.0,
            pitch_annotations: vec![],
            rhythm_annotations: vec![],
            timbre_badge: timbre_badge(combined).into(),
        }
    }

    #[test]
    fn prescreen_counts() {
        let reports: Vec<_> = (0..5).map(|k| report(&format!("c{k}"), k as f64)).collect();
        assert_eq!(prescreen(&reports, 1.0).unwrap(), ["c4", "c3", "c2", "c1", "c0"]);
        let seven: Vec<_> = (0..7).map(|k| report(&format!("c{k}"), 50.0)).collect();
        assert_eq!(prescreen(&seven, 0.1).unwrap(), ["c0"]);
        assert!(prescreen(&[], 0.1).is_err());
        assert!(prescreen(&seven, 0.0).is_err());
    }

    #[test]
    fn per_song_grouping() {
        let mut reports: Vec<_> = (0..4).map(|k| report(&format!("a{k}"), 90.0 + k as f64)).collect();
        for k in 0..4 {
            let mut r = report(&format!("b{k}"), 10.0 + k as f64);
            r.reference_id = String::from("other");
            reports.push(r);
        }
        assert_eq!(prescreen(&reports, 0.25).unwrap(), ["a3", "a2"]);
        assert_eq!(prescreen_per_song(&reports, 0.25).unwrap(), ["a3", "b3"]);
    }
}
