//! Whole-song inference and the 30-second-excerpt baseline.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{encode_windows, head_forward, DimensionRegistry, DimensionScore, DimensionScores, CLASSES};
use crate::audio::{segment_clips, AudioClip};
use crate::error::{Error, Result};
use crate::features::{mel_features, window_features, FeatureWindows, MelMatrix};

/// Excerpt length used by the baseline mode.
pub const CLIP30_SEGMENT_S: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InferMode {
    /// Window the entire clip and score it once.
    Fullsong,
    /// Score each 30 s excerpt independently and average the distributions.
    Clip30,
}

/// Scores precomputed windows with every dimension's pipeline.
pub fn score_windows(windows: &FeatureWindows, registry: &DimensionRegistry, clip_id: &str) -> Result<DimensionScores> {
    registry.validate()?;
    let mut scores = BTreeMap::new();
    for (&d, entry) in &registry.entries {
        let seq = encode_windows(windows, &entry.encoder_id, &entry.encoder, clip_id)?;
        scores.insert(d, DimensionScore::from_distribution(head_forward(&seq, &entry.head)?));
    }
    Ok(DimensionScores { clip_id: clip_id.into(), scores })
}

/// Scores a log-mel matrix, windowed with the registry's settings.
pub fn score_mel(mel: &MelMatrix, registry: &DimensionRegistry, clip_id: &str) -> Result<DimensionScores> {
    let duration = mel.duration_s();
    if duration < registry.window_s {
        return Err(Error::ClipTooShort { needed_s: registry.window_s, actual_s: duration });
    }
    let windows = window_features(mel, registry.window_s, registry.stride_s)?;
    score_windows(&windows, registry, clip_id)
}

pub fn infer_song(clip: &AudioClip, registry: &DimensionRegistry, mode: InferMode) -> Result<DimensionScores> {
    registry.validate()?;
    if clip.duration_s() < registry.window_s {
        return Err(Error::ClipTooShort { needed_s: registry.window_s, actual_s: clip.duration_s() });
    }
    match mode {
        InferMode::Fullsong => score_mel(&mel_features(clip, registry.n_mels)?, registry, clip.id()),
        InferMode::Clip30 => {
            let segments = segment_clips(clip, CLIP30_SEGMENT_S)?;
            let per: Vec<DimensionScores> = segments
                .iter()
                .map(|s| score_mel(&mel_features(s, registry.n_mels)?, registry, s.id()))
                .collect::<Result<_>>()?;
            Ok(average_distributions(clip.id(), &per))
        }
    }
}

/// Mean of the per-segment distributions, dimension by dimension.
pub fn average_distributions(clip_id: &str, parts: &[DimensionScores]) -> DimensionScores {
    let mut scores = BTreeMap::new();
    if let Some(first) = parts.first() {
        for &d in first.scores.keys() {
            let mut dist = [0.0; CLASSES];
            for p in parts {
                for (a, b) in dist.iter_mut().zip(&p.scores[&d].distribution) {
                    *a += b / parts.len() as f64;
                }
            }
            scores.insert(d, DimensionScore::from_distribution(dist));
        }
    }
    DimensionScores { clip_id: clip_id.into(), scores }
}
