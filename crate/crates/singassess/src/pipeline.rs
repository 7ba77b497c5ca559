//! Multi-clip orchestration shared by the CLI and the tests: feature windows,
//! candidate training, registry construction, and tiering.

use std::collections::BTreeMap;

use rayon::prelude::*;
use singassess_core::config::{Config, FeatureConfig};
use singassess_core::features::{mel_features, window_features, FeatureWindows};
use singassess_core::htpr::{assign_tiers, TierAssignment};
use singassess_core::scorer::{
    build_registry, encode_windows, train_head, Candidate, Dimension, DimensionRegistry, DimensionScores,
    EncoderParams, HeadConfig, HeadKind, LabelJudge, OptimizerConfig, ValidationClip,
};
use singassess_core::AudioClip;

use crate::error::{Error, Result};

/// A clip reduced to its scoring windows, with optional labels.
#[derive(Debug, Clone)]
pub struct WindowedClip {
    pub clip_id: String,
    pub windows: FeatureWindows,
    pub labels: BTreeMap<Dimension, u8>,
}

pub fn clip_windows(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureWindows> {
    let mel = mel_features(clip, cfg.n_mels)?;
    Ok(window_features(&mel, cfg.window_s, cfg.stride_s)?)
}

/// Windows every clip in parallel; output order follows input order.
pub fn window_all(clips: &[(AudioClip, BTreeMap<Dimension, u8>)], cfg: &FeatureConfig) -> Result<Vec<WindowedClip>> {
    clips
        .par_iter()
        .map(|(clip, labels)| {
            Ok(WindowedClip { clip_id: clip.id().to_string(), windows: clip_windows(clip, cfg)?, labels: labels.clone() })
        })
        .collect()
}

fn head_kinds(cfg: &Config) -> Result<Vec<HeadKind>> {
    if cfg.scorer.heads.is_empty() {
        return Err(Error::Usage("scorer.heads lists no head kinds".into()));
    }
    let mut kinds: Vec<HeadKind> =
        cfg.scorer.heads.iter().map(|h| h.parse::<HeadKind>()).collect::<Result<_, _>>()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

/// Per-run seed for one (dimension, head kind) pair.
fn head_seed(seed: u64, d: Dimension, kind: HeadKind) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((d as u64) << 8 | kind as u64)
}

/// Fits the configured encoder on the training corpus and trains one head per
/// configured kind for every dimension.
pub fn train_candidates(train: &[WindowedClip], cfg: &Config, seed: u64) -> Result<BTreeMap<Dimension, Vec<Candidate>>> {
    if train.is_empty() {
        return Err(singassess_core::Error::EmptyDataset.into());
    }
    let kinds = head_kinds(cfg)?;
    let mut encoder = EncoderParams::for_id(&cfg.scorer.encoder, cfg.features.n_mels, cfg.scorer.embedding_dim, seed)?;
    encoder.fit_normalisation(train.iter().map(|c| &c.windows))?;
    let sequences = train
        .iter()
        .map(|c| encode_windows(&c.windows, &encoder.encoder_id, &encoder, &c.clip_id))
        .collect::<singassess_core::Result<Vec<_>>>()?;

    let jobs: Vec<(Dimension, HeadKind)> =
        Dimension::ALL.into_iter().flat_map(|d| kinds.iter().map(move |&k| (d, k))).collect();
    let trained = jobs
        .par_iter()
        .map(|&(d, kind)| {
            let data = train
                .iter()
                .zip(&sequences)
                .map(|(c, s)| {
                    let label = c.labels.get(&d).copied().ok_or(singassess_core::Error::MissingDimension(d))?;
                    Ok((s.clone(), label))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut head_cfg = HeadConfig::new(kind, encoder.dim, cfg.scorer.hidden_dim, cfg.scorer.layers);
            head_cfg.attention_heads = cfg.scorer.attention_heads;
            let opt = OptimizerConfig::from_scorer(&cfg.scorer, head_seed(seed, d, kind));
            let head = train_head(&data, &head_cfg, &opt)?;
            Ok((d, Candidate { encoder: encoder.clone(), head }))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out: BTreeMap<Dimension, Vec<Candidate>> = BTreeMap::new();
    for (d, c) in trained {
        out.entry(d).or_default().push(c);
    }
    Ok(out)
}

/// Trains candidates, then keeps the best per dimension by ranking consistency
/// on the validation clips, judged by their labels.
pub fn train_registry(
    train: &[WindowedClip],
    validation: &[WindowedClip],
    cfg: &Config,
    seed: u64,
) -> Result<DimensionRegistry> {
    let candidates = train_candidates(train, cfg, seed)?;
    let mut judge = LabelJudge {
        labels: validation
            .iter()
            .map(|c| (c.clip_id.clone(), c.labels.iter().map(|(&d, &l)| (d, f64::from(l))).collect()))
            .collect(),
    };
    let val: Vec<ValidationClip> =
        validation.iter().map(|c| ValidationClip { clip_id: c.clip_id.clone(), windows: c.windows.clone() }).collect();
    Ok(build_registry(candidates, &val, &mut judge, cfg.htpr.n_triplets, seed)?)
}

pub fn score_all(clips: &[WindowedClip], registry: &DimensionRegistry) -> Result<Vec<DimensionScores>> {
    clips
        .par_iter()
        .map(|c| Ok(singassess_core::scorer::score_windows(&c.windows, registry, &c.clip_id)?))
        .collect()
}

/// Tiers clips by one dimension's expected score.
pub fn tiers_for(scores: &[DimensionScores], dimension: Dimension) -> Result<TierAssignment> {
    let keys = scores
        .iter()
        .map(|s| {
            s.expected(dimension)
                .map(|e| (s.clip_id.clone(), e))
                .ok_or(singassess_core::Error::MissingDimension(dimension))
        })
        .collect::<singassess_core::Result<BTreeMap<_, _>>>()?;
    Ok(assign_tiers(&keys)?)
}
