//! Singing-assessment algorithms with no operating-system dependencies.
//!
//! The crate is `no_std` (it needs `alloc`) so the whole analysis chain can
//! run anywhere a heap exists. File formats, WAV decoding, the CLI, and the
//! judging service live in the companion `singassess` crate.
//!
//! Pipeline overview:
//!
//! ```text
//! AudioClip -> features (F0, onsets, log-mel) -> rulesignal (reference-based, 0..100)
//!           -> windows -> encoder -> head -> DimensionScores (reference-free, 1..5)
//!           -> htpr (tiers, triplets, judgments) / feedback (critiques, document)
//! ```

#![no_std]
#![warn(clippy::all)]

extern crate alloc;

pub mod audio;
pub mod config;
pub mod error;
pub mod features;
pub mod feedback;
pub mod fft;
pub mod htpr;
pub mod math;
pub mod rulesignal;
pub mod scorer;
pub mod synth;

pub use audio::{AudioClip, ScreenVerdict};
pub use config::Config;
pub use error::{Error, Result};
pub use scorer::Dimension;

/// Canonical analysis rate. Every feature extractor assumes it.
pub const CANONICAL_RATE_HZ: u32 = 16_000;
