//! Tunable parameters, grouped the way the config file nests them.
//!
//! Every struct deserialises with per-field defaults, so a config file only needs the keys
//! it changes.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub audio: AudioConfig,
    pub features: FeatureConfig,
    pub rulesignal: RuleSignalConfig,
    pub scorer: ScorerConfig,
    pub htpr: HtprConfig,
    pub feedback: FeedbackConfig,
    pub summarizer: SummarizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub target_rate_hz: u32,
    pub silence_floor_db: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self { target_rate_hz: crate::CANONICAL_RATE_HZ, silence_floor_db: -50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub voicing_threshold: f64,
    pub onset_delta: f64,
    pub n_mels: usize,
    pub window_s: f64,
    pub stride_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            fmin_hz: 65.0,
            fmax_hz: 1100.0,
            voicing_threshold: 0.35,
            onset_delta: 0.1,
            n_mels: 80,
            window_s: 3.0,
            stride_s: 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSignalConfig {
    pub pitch_weight: f64,
    pub rhythm_weight: f64,
    pub timbre_weight: f64,
    /// Sakoe-Chiba half-width floor in seconds; the band is never narrower than the length gap.
    pub band_s: f64,
    pub onset_tolerance_s: f64,
    pub pitch_annotation_cents: f64,
    pub pitch_annotation_min_run_s: f64,
    pub rhythm_annotation_s: f64,
}

impl Default for RuleSignalConfig {
    fn default() -> Self {
        Self {
            pitch_weight: 0.5,
            rhythm_weight: 0.3,
            timbre_weight: 0.2,
            band_s: 10.0,
            onset_tolerance_s: 0.25,
            pitch_annotation_cents: 50.0,
            pitch_annotation_min_run_s: 0.3,
            rhythm_annotation_s: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    pub encoder: String,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub attention_heads: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `0` selects full-batch training.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub heads: Vec<String>,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            encoder: String::from("mel-proj"),
            embedding_dim: 64,
            hidden_dim: 128,
            layers: 2,
            attention_heads: 2,
            learning_rate: 1e-4,
            weight_decay: 0.01,
            batch_size: 16,
            max_epochs: 500,
            patience: 10,
            validation_fraction: 0.2,
            heads: alloc::vec![String::from("mlp")],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HtprConfig {
    pub n_triplets: usize,
}

impl Default for HtprConfig {
    fn default() -> Self {
        Self { n_triplets: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackConfig {
    pub segment_s: f64,
    pub critic: String,
    /// Below this voiced fraction a segment gets the "insufficient material" note everywhere.
    pub min_voiced_fraction: f64,
    pub jitter_cents: f64,
    pub grid_deviation_cents: f64,
    pub gap_cv: f64,
    pub droop_cents: f64,
    pub dynamics_std: f64,
    pub centroid_cv: f64,
}

impl Default for FeedbackConfig {
    fn default() -> Self {
        Self {
            segment_s: 30.0,
            critic: String::from("rule-based"),
            min_voiced_fraction: 0.1,
            jitter_cents: 20.0,
            grid_deviation_cents: 10.0,
            gap_cv: 0.5,
            droop_cents: 40.0,
            dynamics_std: 0.6,
            centroid_cv: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizerConfig {
    /// Empty disables the external summary.
    pub url: String,
    pub timeout_s: f64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for SummarizerConfig {
    fn default() -> Self {
        Self { url: String::new(), timeout_s: 30.0, retries: 3, backoff_ms: 250 }
    }
}
