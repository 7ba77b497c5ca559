//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singassess::pipeline::{window_all, WindowedClip};
use singassess_core::config::Config;
use singassess_core::htpr::Tier;
use singassess_core::scorer::Dimension;
use singassess_core::synth::{random_melody, render_sections, Section, Voice};
use singassess_core::AudioClip;

/// Centre quality and label of each tier.
pub const TIERS: [(Tier, f64, u8); 3] = [(Tier::High, 0.85, 5), (Tier::Medium, 0.5, 3), (Tier::Low, 0.15, 1)];
pub const SECTION_SPREAD: f64 = 0.15;

#[derive(Debug, Clone)]
pub struct SongSpec {
    pub id: String,
    pub tier: Tier,
    pub label: u8,
    pub section_quality: Vec<f64>,
    pub seed: u64,
}

/// `per_tier` songs per tier; each song's sections vary around its tier's quality.
pub fn corpus_specs(seed: u64, per_tier: usize, sections: usize, prefix: &str) -> Vec<SongSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (ti, &(tier, centre, label)) in TIERS.iter().enumerate() {
        for k in 0..per_tier {
            let section_quality =
                (0..sections).map(|_| (centre + rng.random_range(-SECTION_SPREAD..SECTION_SPREAD)).clamp(0.0, 1.0)).collect();
            out.push(SongSpec {
                id: format!("{prefix}{ti}{k:03}"),
                tier,
                label,
                section_quality,
                seed: rng.random(),
            });
        }
    }
    out
}

pub fn render_song(spec: &SongSpec, section_s: f64) -> AudioClip {
    let total = section_s * spec.section_quality.len() as f64;
    let notes = random_melody(spec.seed, total);
    let sections: Vec<Section> = spec
        .section_quality
        .iter()
        .enumerate()
        .map(|(i, &q)| Section { start_s: i as f64 * section_s, voice: Voice::with_quality(q) })
        .collect();
    render_sections(spec.id.clone(), &notes, &sections, spec.seed ^ 0x5eed)
}

pub fn labels(label: u8) -> BTreeMap<Dimension, u8> {
    Dimension::ALL.into_iter().map(|d| (d, label)).collect()
}

pub fn render_all(specs: &[SongSpec], section_s: f64) -> Vec<(AudioClip, BTreeMap<Dimension, u8>)> {
    use rayon::prelude::*;
    specs.par_iter().map(|s| (render_song(s, section_s), labels(s.label))).collect()
}

pub fn windowed(specs: &[SongSpec], section_s: f64, cfg: &Config) -> Vec<WindowedClip> {
    window_all(&render_all(specs, section_s), &cfg.features).expect("corpus windows")
}
