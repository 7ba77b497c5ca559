//! Inter-rater agreement, rating aggregation, and forced-distribution audits.

use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Dimension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub clip_id: String,
    pub annotator_id: String,
    pub scores: BTreeMap<Dimension, u8>,
    #[serde(default)]
    pub critiques: BTreeMap<Dimension, String>,
}

impl AnnotationRecord {
    pub fn validate(&self, professional: bool) -> Result<()> {
        if let Some(&s) = self.scores.values().find(|s| !(1..=5).contains(*s)) {
            return Err(Error::ScoreOutOfRange(s));
        }
        if professional {
            if let Some(d) = Dimension::ALL.into_iter().find(|d| !self.scores.contains_key(d)) {
                return Err(Error::MissingDimension(d));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub exact: f64,
    pub within_one: f64,
}

pub fn agreement_stats(a: &[u8], b: &[u8]) -> Result<Agreement> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&s) = a.iter().chain(b).find(|s| !(1..=5).contains(*s)) {
        return Err(Error::ScoreOutOfRange(s));
    }
    let n = a.len() as f64;
    let exact = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let within_one = a.iter().zip(b).filter(|(x, y)| x.abs_diff(**y) <= 1).count() as f64 / n;
    Ok(Agreement { exact, within_one })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipRating {
    pub mean: f64,
    pub mid_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingAggregate {
    pub clips: BTreeMap<String, ClipRating>,
    /// Share of clips whose mean lies in `[2, 4]`.
    pub mid_band_fraction: f64,
}

/// Per-clip mean of one dimension's scores. With `None`, each record contributes
/// the mean of all the scores it carries (a single amateur score, typically).
pub fn aggregate_ratings(records: &[AnnotationRecord], dimension: Option<Dimension>) -> Result<RatingAggregate> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in records {
        r.validate(false)?;
        let value = match dimension {
            Some(d) => r.scores.get(&d).map(|&s| f64::from(s)),
            None if r.scores.is_empty() => None,
            None => Some(r.scores.values().map(|&s| f64::from(s)).sum::<f64>() / r.scores.len() as f64),
        };
        if let Some(v) = value {
            let e = sums.entry(r.clip_id.as_str()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    if sums.is_empty() {
        return Err(Error::EmptyInput);
    }
    let clips: BTreeMap<String, ClipRating> = sums
        .into_iter()
        .map(|(id, (s, n))| {
            let mean = s / n as f64;
            (id.into(), ClipRating { mean, mid_band: (2.0..=4.0).contains(&mean) })
        })
        .collect();
    let mid_band_fraction = clips.values().filter(|c| c.mid_band).count() as f64 / clips.len() as f64;
    Ok(RatingAggregate { clips, mid_band_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForcedDistributionAudit {
    pub counts: [usize; 5],
    pub compliant: bool,
}

/// Counts per score for one annotator; compliant when every count is within one
/// of `round(N / 5)`.
pub fn audit_forced_distribution(scores: &[u8]) -> Result<ForcedDistributionAudit> {
    if scores.len() < 5 {
        return Err(Error::InvalidParameter("forced-distribution audit needs at least 5 ratings".into()));
    }
    let mut counts = [0usize; 5];
    for &s in scores {
        if !(1..=5).contains(&s) {
            return Err(Error::ScoreOutOfRange(s));
        }
        counts[usize::from(s - 1)] += 1;
    }
    let target = (scores.len() + 2) / 5;
    let compliant = counts.iter().all(|&c| c.abs_diff(target) <= 1);
    Ok(ForcedDistributionAudit { counts, compliant })
}
