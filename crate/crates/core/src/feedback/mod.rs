//! Per-segment critiques, their aggregation into a diagnostic document, and the
//! summarizer wire types.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scorer::Dimension;

mod critic;

pub use critic::{critique_clip, critique_segments, Critic, RuleCritic, INSUFFICIENT, MAX_SEGMENT_S, RULE_BASED};

/// A measured value behind a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub time_s: f64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipCritique {
    pub clip_id: String,
    pub segment_index: usize,
    pub start_s: f64,
    pub duration_s: f64,
    pub dimension_notes: BTreeMap<Dimension, String>,
    pub evidence: BTreeMap<Dimension, Vec<Evidence>>,
}

impl ClipCritique {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }
}

/// One entry of the issue list; a run of identical notes collapses into one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub dimension: Dimension,
    pub note: String,
    pub start_s: f64,
    pub end_s: f64,
    pub segments: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticDocument {
    pub clip_id: String,
    pub critiques: Vec<ClipCritique>,
    pub issues: Vec<Issue>,
    #[serde(default)]
    pub summary: Option<String>,
    /// Set when the summary is the local fallback rather than the summarizer's text.
    #[serde(default)]
    pub degraded: bool,
}

/// Minimum run of consecutive identical notes that is merged into one issue.
pub const MERGE_RUN: usize = 3;

pub fn aggregate_critiques(mut critiques: Vec<ClipCritique>) -> Result<DiagnosticDocument> {
    let first = critiques.first().ok_or(Error::EmptyInput)?;
    let clip_id = first.clip_id.clone();
    if critiques.iter().any(|c| c.clip_id != clip_id) {
        return Err(Error::MixedClipIds);
    }
    critiques.sort_by_key(|c| c.segment_index);
    for (expected, c) in critiques.iter().enumerate() {
        if c.segment_index != expected {
            return Err(Error::SegmentGap { expected, found: c.segment_index });
        }
    }
    let mut issues = Vec::new();
    for d in Dimension::ALL {
        let mut i = 0;
        while i < critiques.len() {
            let Some(note) = critiques[i].dimension_notes.get(&d) else {
                i += 1;
                continue;
            };
            let mut j = i + 1;
            while j < critiques.len() && critiques[j].dimension_notes.get(&d) == Some(note) {
                j += 1;
            }
            let push = |issues: &mut Vec<Issue>, a: usize, b: usize| {
                issues.push(Issue {
                    dimension: d,
                    note: note.clone(),
                    start_s: critiques[a].start_s,
                    end_s: critiques[b - 1].end_s(),
                    segments: (a..b).collect(),
                })
            };
            if j - i >= MERGE_RUN {
                push(&mut issues, i, j);
            } else {
                (i..j).for_each(|k| push(&mut issues, k, k + 1));
            }
            i = j;
        }
    }
    issues.sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.dimension.cmp(&b.dimension)));
    Ok(DiagnosticDocument { clip_id, critiques, issues, summary: None, degraded: false })
}

fn evidence_for<'a>(doc: &'a DiagnosticDocument, issue: &Issue) -> impl Iterator<Item = &'a Evidence> + 'a {
    let d = issue.dimension;
    let segs = issue.segments.clone();
    segs.into_iter().flat_map(move |s| doc.critiques[s].evidence.get(&d).into_iter().flatten())
}

/// Plain-text issue list, one line per issue with its evidence. This is also the
/// degraded-mode summary.
pub fn render_text(doc: &DiagnosticDocument) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Diagnostic report for {}", doc.clip_id);
    for issue in &doc.issues {
        let _ = write!(out, "[{:.1}-{:.1} s] {}: {}", issue.start_s, issue.end_s, issue.dimension, issue.note);
        let mut metrics: Vec<&Evidence> = evidence_for(doc, issue).collect();
        metrics.dedup_by(|a, b| a.metric == b.metric && a.value == b.value);
        if !metrics.is_empty() {
            out.push_str(" (");
            for (k, e) in metrics.iter().enumerate() {
                if k > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{} = {:.3} at {:.1} s", e.metric, e.value, e.time_s);
            }
            out.push(')');
        }
        out.push('\n');
    }
    out
}

/// Request body sent to the external summarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRequest {
    pub clip_id: String,
    pub dimensions: Vec<Dimension>,
    pub critiques: Vec<CritiquePayload>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CritiquePayload {
    pub segment_index: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub notes: BTreeMap<Dimension, String>,
}

/// Response body expected from the summarizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryResponse {
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub status: Option<String>,
}

impl SummaryResponse {
    /// The summary text, or `None` when the server signalled failure.
    pub fn into_summary(self) -> Result<Option<String>> {
        match (self.status.as_deref(), self.summary) {
            (Some("error"), _) => Ok(None),
            (None | Some("ok"), Some(s)) => Ok(Some(s)),
            (Some(other), _) if other != "ok" => {
                Err(Error::InvalidParameter(alloc::format!("unknown summarizer status `{other}`")))
            }
            _ => Err(Error::InvalidParameter("summarizer response lacks `summary`".into())),
        }
    }
}

pub fn summary_request(doc: &DiagnosticDocument) -> SummaryRequest {
    SummaryRequest {
        clip_id: doc.clip_id.clone(),
        dimensions: Dimension::ALL.to_vec(),
        critiques: doc
            .critiques
            .iter()
            .map(|c| CritiquePayload {
                segment_index: c.segment_index,
                start_s: c.start_s,
                end_s: c.end_s(),
                notes: c.dimension_notes.clone(),
            })
            .collect(),
    }
}
