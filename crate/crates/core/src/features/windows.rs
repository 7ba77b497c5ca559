use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::MelMatrix;
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// One fixed-length slice of a mel matrix. Rows past `valid_frames` are zero padding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    pub start_s: f64,
    pub matrix: MelMatrix,
    pub valid_frames: usize,
}

impl FeatureWindow {
    pub fn valid_rows(&self) -> &[Vec<f64>] {
        &self.matrix.frames[..self.valid_frames]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindows {
    pub windows: Vec<FeatureWindow>,
    pub window_s: f64,
    pub stride_s: f64,
}

impl FeatureWindows {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// Cuts `mel` into overlapping windows; the last one is zero-padded so none drops frames.
pub fn window_features(mel: &MelMatrix, window_s: f64, stride_s: f64) -> Result<FeatureWindows> {
    if !(stride_s > 0.0 && stride_s <= window_s) {
        return Err(Error::InvalidParameter(format!("need 0 < stride ({stride_s}) <= window ({window_s})")));
    }
    let wf = ((window_s / mel.hop_s).round() as usize).max(1);
    let sf = ((stride_s / mel.hop_s).round() as usize).max(1);
    let total = mel.len();
    let count = if total <= wf { 1 } else { (total - wf).div_ceil(sf) + 1 };
    let windows = (0..count)
        .map(|i| {
            let start = i * sf;
            let end = (start + wf).min(total);
            let mut frames: Vec<Vec<f64>> = mel.frames[start.min(total)..end].to_vec();
            let valid_frames = frames.len();
            frames.resize(wf, vec![0.0; mel.n_mels]);
            FeatureWindow {
                start_s: start as f64 * mel.hop_s,
                matrix: MelMatrix { frames, n_mels: mel.n_mels, hop_s: mel.hop_s },
                valid_frames,
            }
        })
        .collect();
    Ok(FeatureWindows { windows, window_s, stride_s })
}
