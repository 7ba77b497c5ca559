//! Per-dimension model selection by tiered-ranking score.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{encode_windows, head_forward, predict_score, Dimension, EncoderParams, HeadKind, TrainedHead};
use crate::error::{Error, Result};
use crate::features::FeatureWindows;
use crate::htpr::{assign_tiers, sample_triplets, Triplet};

/// An encoder and head pair competing for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub encoder: EncoderParams,
    pub head: TrainedHead,
}

impl Candidate {
    pub fn encoder_id(&self) -> &str {
        &self.encoder.encoder_id
    }

    /// Expected score for one clip's windows.
    pub fn expected(&self, windows: &FeatureWindows, clip_id: &str) -> Result<f64> {
        let seq = encode_windows(windows, &self.encoder.encoder_id, &self.encoder, clip_id)?;
        Ok(predict_score(&head_forward(&seq, &self.head)?).0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub encoder_id: String,
    pub kind: HeadKind,
    pub htpr_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub encoder_id: String,
    pub encoder: EncoderParams,
    pub head: TrainedHead,
    #[serde(default)]
    pub htpr_score: Option<f64>,
    #[serde(default)]
    pub candidate_scores: Vec<CandidateScore>,
}

impl From<Candidate> for RegistryEntry {
    fn from(c: Candidate) -> Self {
        Self {
            encoder_id: c.encoder.encoder_id.clone(),
            encoder: c.encoder,
            head: c.head,
            htpr_score: None,
            candidate_scores: Vec::new(),
        }
    }
}

/// The deployed model for each dimension, plus the windowing it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRegistry {
    pub entries: BTreeMap<Dimension, RegistryEntry>,
    pub n_mels: usize,
    pub window_s: f64,
    pub stride_s: f64,
}

impl DimensionRegistry {
    pub fn new(entries: BTreeMap<Dimension, RegistryEntry>, n_mels: usize, window_s: f64, stride_s: f64) -> Result<Self> {
        let r = Self { entries, n_mels, window_s, stride_s };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = Dimension::ALL.into_iter().find(|d| !self.entries.contains_key(d)) {
            return Err(Error::MissingDimension(d));
        }
        if !(self.window_s > 0.0 && self.stride_s > 0.0) {
            return Err(Error::InvalidParameter("window and stride must be positive".into()));
        }
        for e in self.entries.values() {
            if e.encoder.n_mels != self.n_mels || e.encoder.dim != e.head.config.input_dim {
                return Err(Error::EncoderMismatch(alloc::format!("entry `{}` does not fit the registry", e.encoder_id)));
            }
        }
        Ok(())
    }

    pub fn get(&self, d: Dimension) -> Result<&RegistryEntry> {
        self.entries.get(&d).ok_or(Error::MissingDimension(d))
    }
}

/// Decides whether a presented triplet shows a clear quality gradient.
pub trait TierJudge {
    fn judge(&mut self, dimension: Dimension, triplet: &Triplet) -> bool;
}

/// Judges by known labels: consistent iff label(high) > label(medium) > label(low).
#[derive(Debug, Clone, Default)]
pub struct LabelJudge {
    pub labels: BTreeMap<String, BTreeMap<Dimension, f64>>,
}

impl TierJudge for LabelJudge {
    fn judge(&mut self, dimension: Dimension, t: &Triplet) -> bool {
        let label = |c: &str| self.labels.get(c).and_then(|m| m.get(&dimension)).copied();
        match (label(&t.high_clip), label(&t.medium_clip), label(&t.low_clip)) {
            (Some(h), Some(m), Some(l)) => h > m && m > l,
            _ => false,
        }
    }
}

/// Pre-windowed clip used for selection.
#[derive(Debug, Clone)]
pub struct ValidationClip {
    pub clip_id: String,
    pub windows: FeatureWindows,
}

/// Tiered-ranking score of one candidate on the validation clips.
pub fn evaluate_candidate(
    dimension: Dimension,
    candidate: &Candidate,
    validation: &[ValidationClip],
    judge: &mut dyn TierJudge,
    n_triplets: usize,
    seed: u64,
) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let keys = validation
        .iter()
        .map(|c| Ok((c.clip_id.clone(), candidate.expected(&c.windows, &c.clip_id)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let tiers = assign_tiers(&keys)?;
    let triplets = sample_triplets(&tiers, n_triplets, seed)?;
    let consistent = triplets.iter().filter(|t| judge.judge(dimension, t)).count();
    Ok(consistent as f64 / triplets.len() as f64)
}

/// Index of the best `(score, kind, encoder_id)`: highest score, then head kind
/// order, then encoder id.
pub fn select_best(scored: &[(f64, HeadKind, &str)]) -> Option<usize> {
    (0..scored.len()).min_by(|&a, &b| {
        let (sa, ka, ea) = scored[a];
        let (sb, kb, eb) = scored[b];
        sb.total_cmp(&sa).then(ka.cmp(&kb)).then(ea.cmp(eb))
    })
}

pub fn build_registry(
    candidates: BTreeMap<Dimension, Vec<Candidate>>,
    validation: &[ValidationClip],
    judge: &mut dyn TierJudge,
    n_triplets: usize,
    seed: u64,
) -> Result<DimensionRegistry> {
    if validation.is_empty() {
        return Err(Error::EmptyValidation);
    }
    let first = &validation[0].windows;
    let (n_mels, window_s, stride_s) = (
        first.windows.first().map(|w| w.matrix.n_mels).ok_or(Error::EmptyInput)?,
        first.window_s,
        first.stride_s,
    );
    let mut entries = BTreeMap::new();
    for d in Dimension::ALL {
        let list = candidates.get(&d).filter(|l| !l.is_empty()).ok_or(Error::MissingDimension(d))?;
        let scores = list
            .iter()
            .map(|c| evaluate_candidate(d, c, validation, judge, n_triplets, seed))
            .collect::<Result<Vec<f64>>>()?;
        let keyed: Vec<(f64, HeadKind, &str)> =
            list.iter().zip(&scores).map(|(c, &s)| (s, c.head.config.kind, c.encoder_id())).collect();
        let best = select_best(&keyed).expect("non-empty candidates");
        let mut entry = RegistryEntry::from(list[best].clone());
        entry.htpr_score = Some(scores[best]);
        entry.candidate_scores = keyed
            .iter()
            .map(|&(s, kind, id)| CandidateScore { encoder_id: id.into(), kind, htpr_score: s })
            .collect();
        entries.insert(d, entry);
    }
    DimensionRegistry::new(entries, n_mels, window_s, stride_s)
}
