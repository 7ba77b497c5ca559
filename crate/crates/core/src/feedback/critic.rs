//! The rule-based critic: feature statistics mapped to fixed sentences per dimension.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;

#[allow(unused_imports)]
use crate::math::Float;

use super::{ClipCritique, Evidence};
use crate::audio::{segment_clips, AudioClip};
use crate::config::{FeatureConfig, FeedbackConfig};
use crate::error::{Error, Result};
use crate::features::{extract_take, mel_band_centres, PitchContour, TakeFeatures};
use crate::math::{mean, median, std_dev};
use crate::scorer::Dimension;

pub const RULE_BASED: &str = "rule-based";
pub const MAX_SEGMENT_S: f64 = 35.0;
pub const INSUFFICIENT: &str = "insufficient voiced material";

/// Adjacent-frame pitch jump that starts a new note.
const NOTE_SPLIT_CENTS: f64 = 50.0;
const MIN_NOTE_FRAMES: usize = 10;
/// Unvoiced stretch that separates phrases.
const PHRASE_GAP_S: f64 = 0.25;

pub trait Critic {
    fn id(&self) -> &str;
    fn critique(&self, segment: &AudioClip, features: &TakeFeatures, segment_index: usize, start_s: f64)
        -> Result<ClipCritique>;
}

#[derive(Debug, Clone, Default)]
pub struct RuleCritic {
    pub cfg: FeedbackConfig,
}

#[derive(Debug, Clone)]
struct NoteSpan {
    start: usize,
    cents: Vec<f64>,
}

fn notes(contour: &PitchContour) -> Vec<NoteSpan> {
    let mut out = Vec::new();
    let mut cur: Option<NoteSpan> = None;
    for k in 0..contour.len() {
        match (contour.get(k), cur.as_mut()) {
            (Some(c), Some(n)) if (c - n.cents[n.cents.len() - 1]).abs() <= NOTE_SPLIT_CENTS => n.cents.push(c),
            (Some(c), _) => {
                out.extend(cur.take());
                cur = Some(NoteSpan { start: k, cents: alloc::vec![c] });
            }
            (None, _) => out.extend(cur.take()),
        }
    }
    out.extend(cur);
    out.retain(|n| n.cents.len() >= MIN_NOTE_FRAMES);
    out
}

fn wrap100(x: f64) -> f64 {
    x - 100.0 * (x / 100.0).floor()
}

/// Root-mean-square distance of note centres from the best-fitting semitone grid.
fn grid_deviation(centres: &[f64]) -> f64 {
    let (s, c) = centres.iter().fold((0.0, 0.0), |(s, c), x| {
        let a = TAU * wrap100(*x) / 100.0;
        (s + a.sin(), c + a.cos())
    });
    let offset = s.atan2(c) / TAU * 100.0;
    let sq: f64 = centres
        .iter()
        .map(|x| {
            let d = wrap100(x - offset);
            let d = if d > 50.0 { d - 100.0 } else { d };
            d * d
        })
        .sum();
    (sq / centres.len() as f64).sqrt()
}

fn ev(time_s: f64, metric: &str, value: f64) -> Evidence {
    Evidence { time_s, metric: metric.into(), value }
}

impl RuleCritic {
    pub fn new(cfg: FeedbackConfig) -> Self {
        Self { cfg }
    }

    fn technique(&self, f: &TakeFeatures, t0: f64) -> (String, Vec<Evidence>) {
        let spans = notes(&f.contour);
        let hop = f.contour.hop_s;
        if spans.is_empty() {
            return (INSUFFICIENT.into(), alloc::vec![ev(t0, "sustained_notes", 0.0)]);
        }
        let jitters: Vec<f64> = spans.iter().map(|n| std_dev(&n.cents)).collect();
        let jitter = median(&jitters);
        let centres: Vec<f64> = spans.iter().map(|n| median(&n.cents)).collect();
        let grid = grid_deviation(&centres);
        let worst = (jitter / self.cfg.jitter_cents).max(grid / self.cfg.grid_deviation_cents);
        let note = if worst <= 1.0 {
            "stable intonation"
        } else if worst <= 2.0 {
            "slightly unstable intonation"
        } else {
            "unstable intonation"
        };
        let at = t0 + spans[0].start as f64 * hop;
        (note.into(), alloc::vec![ev(at, "jitter_cents", jitter), ev(at, "grid_deviation_cents", grid)])
    }

    fn breath(&self, f: &TakeFeatures, t0: f64) -> (String, Vec<Evidence>) {
        let c = &f.contour;
        let hop = c.hop_s;
        let min_gap = (PHRASE_GAP_S / hop).round() as usize;
        // Voiced regions separated by long unvoiced gaps are phrases.
        let mut phrases: Vec<(usize, usize)> = Vec::new();
        let mut run_start: Option<usize> = None;
        let mut last_voiced = 0usize;
        for k in 0..c.len() {
            if c.voiced[k] {
                match run_start {
                    Some(_) if k - last_voiced > min_gap => {
                        phrases.push((run_start.unwrap(), last_voiced));
                        run_start = Some(k);
                    }
                    None => run_start = Some(k),
                    _ => {}
                }
                last_voiced = k;
            }
        }
        if let Some(s) = run_start {
            phrases.push((s, last_voiced));
        }
        let gaps: Vec<f64> = phrases.windows(2).map(|w| (w[1].0 - w[0].1) as f64 * hop).collect();
        let mut evidence = Vec::new();
        let mut problems = Vec::new();
        if gaps.len() >= 2 {
            let cv = std_dev(&gaps) / mean(&gaps);
            evidence.push(ev(t0 + phrases[1].0 as f64 * hop, "gap_cv", cv));
            if cv > self.cfg.gap_cv {
                problems.push("irregular breathing between phrases");
            }
        }
        // Pitch fall across the last sustained note of each phrase.
        let spans = notes(c);
        let droops: Vec<f64> = phrases
            .iter()
            .filter_map(|&(_, end)| spans.iter().rev().find(|n| n.start <= end && n.start + n.cents.len() > end - 1))
            .map(|n| {
                let k = (n.cents.len() / 3).max(1);
                median(&n.cents[..k]) - median(&n.cents[n.cents.len() - k..])
            })
            .collect();
        if !droops.is_empty() {
            let droop = mean(&droops);
            evidence.push(ev(t0 + phrases[0].1 as f64 * hop, "phrase_end_droop_cents", droop));
            if droop > self.cfg.droop_cents {
                problems.push("pitch sags at phrase ends");
            }
        }
        if evidence.is_empty() {
            return (INSUFFICIENT.into(), alloc::vec![ev(t0, "phrases", phrases.len() as f64)]);
        }
        let note = if problems.is_empty() { String::from("steady breath support") } else { problems.join("; ") };
        (note, evidence)
    }

    fn voiced_frames<'a>(&self, f: &'a TakeFeatures) -> impl Iterator<Item = (usize, &'a Vec<f64>)> + 'a {
        let voiced = &f.contour.voiced;
        f.mel.frames.iter().enumerate().filter(move |(k, _)| voiced.get(*k).copied().unwrap_or(false))
    }

    fn emotion(&self, f: &TakeFeatures, t0: f64) -> (String, Vec<Evidence>) {
        let energies: Vec<f64> = self
            .voiced_frames(f)
            .map(|(_, row)| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
            })
            .collect();
        let spread = std_dev(&energies);
        let note = if spread < self.cfg.dynamics_std {
            "flat dynamics with little expressive contrast"
        } else {
            "expressive dynamic range"
        };
        (note.into(), alloc::vec![ev(t0, "dynamics_std", spread)])
    }

    fn timbre(&self, f: &TakeFeatures, t0: f64) -> (String, Vec<Evidence>) {
        let centres = mel_band_centres(f.mel.n_mels);
        let centroids: Vec<f64> = self
            .voiced_frames(f)
            .map(|(_, row)| {
                let (num, den) = row.iter().zip(&centres).fold((0.0, 0.0), |(n, d), (v, c)| {
                    let e = v.exp();
                    (n + e * c, d + e)
                });
                num / den
            })
            .collect();
        let cv = std_dev(&centroids) / mean(&centroids);
        let note = if cv > self.cfg.centroid_cv { "unstable tone colour" } else { "consistent tone colour" };
        (note.into(), alloc::vec![ev(t0, "centroid_cv", cv)])
    }
}

impl Critic for RuleCritic {
    fn id(&self) -> &str {
        RULE_BASED
    }

    fn critique(
        &self,
        segment: &AudioClip,
        f: &TakeFeatures,
        segment_index: usize,
        start_s: f64,
    ) -> Result<ClipCritique> {
        let mut dimension_notes = BTreeMap::new();
        let mut evidence = BTreeMap::new();
        let vf = f.contour.voiced_fraction();
        if vf < self.cfg.min_voiced_fraction {
            for d in Dimension::ALL {
                dimension_notes.insert(d, String::from(INSUFFICIENT));
                evidence.insert(d, alloc::vec![ev(start_s, "voiced_fraction", vf)]);
            }
        } else {
            for (d, (note, e)) in [
                (Dimension::Breath, self.breath(f, start_s)),
                (Dimension::Timbre, self.timbre(f, start_s)),
                (Dimension::Emotion, self.emotion(f, start_s)),
                (Dimension::Technique, self.technique(f, start_s)),
            ] {
                dimension_notes.insert(d, note);
                evidence.insert(d, e);
            }
        }
        Ok(ClipCritique {
            clip_id: segment.id().into(),
            segment_index,
            start_s,
            duration_s: segment.duration_s(),
            dimension_notes,
            evidence,
        })
    }
}

fn critic_for(critic_id: &str, cfg: &FeedbackConfig) -> Result<Box<dyn Critic>> {
    match critic_id {
        RULE_BASED => Ok(Box::new(RuleCritic::new(cfg.clone()))),
        other => Err(Error::UnknownCritic(other.into())),
    }
}

/// Critiques one segment of at most 35 s from its precomputed features.
pub fn critique_clip(
    segment: &AudioClip,
    features: Option<&TakeFeatures>,
    critic_id: &str,
    cfg: &FeedbackConfig,
    segment_index: usize,
    start_s: f64,
) -> Result<ClipCritique> {
    if segment.duration_s() > MAX_SEGMENT_S {
        return Err(Error::SegmentTooLong { max_s: MAX_SEGMENT_S, actual_s: segment.duration_s() });
    }
    let critic = critic_for(critic_id, cfg)?;
    let f = features.ok_or_else(|| Error::MissingFeatures(segment.id().into()))?;
    if f.clip_id != segment.id() || f.mel.is_empty() {
        return Err(Error::MissingFeatures(segment.id().into()));
    }
    critic.critique(segment, f, segment_index, start_s)
}

/// Splits a whole take into segments and critiques each; critiques carry the
/// parent clip's id.
pub fn critique_segments(clip: &AudioClip, features: &FeatureConfig, cfg: &FeedbackConfig) -> Result<Vec<ClipCritique>> {
    let segments = segment_clips(clip, cfg.segment_s)?;
    let mut start = 0.0;
    let mut out = Vec::with_capacity(segments.len());
    for (i, seg) in segments.iter().enumerate() {
        let f = extract_take(seg, features)?;
        let mut c = critique_clip(seg, Some(&f), &cfg.critic, cfg, i, start)?;
        c.clip_id = clip.id().into();
        start += seg.duration_s();
        out.push(c);
    }
    Ok(out)
}
