//! Window encoders: per-window log-mel statistics, optionally projected to `D`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingSequence;
use crate::error::{Error, Result};
use crate::features::{FeatureWindow, FeatureWindows};

/// Statistics followed by a `tanh` affine projection.
pub const MEL_PROJ: &str = "mel-proj";
/// Standardised statistics with no projection.
pub const MEL_STATS: &str = "mel-stats";

const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub encoder_id: String,
    pub n_mels: usize,
    pub dim: usize,
    /// Subtracted from the raw statistics.
    pub input_mean: Vec<f64>,
    /// Multiplied into the centred statistics.
    pub input_scale: Vec<f64>,
    /// `dim x 3 n_mels`, row-major. Empty for `mel-stats`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EncoderParams {
    pub fn stats_len(&self) -> usize {
        3 * self.n_mels
    }

    pub fn mel_proj(n_mels: usize, dim: usize, seed: u64) -> Self {
        let inp = 3 * n_mels;
        let limit = (6.0 / (inp + dim) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight = (0..dim * inp).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            encoder_id: MEL_PROJ.into(),
            n_mels,
            dim,
            input_mean: vec![0.0; inp],
            input_scale: vec![1.0; inp],
            weight,
            bias: vec![0.0; dim],
        }
    }

    pub fn mel_stats(n_mels: usize) -> Self {
        let inp = 3 * n_mels;
        Self {
            encoder_id: MEL_STATS.into(),
            n_mels,
            dim: inp,
            input_mean: vec![0.0; inp],
            input_scale: vec![1.0; inp],
            weight: Vec::new(),
            bias: Vec::new(),
        }
    }

    /// Builds a registered encoder by id.
    pub fn for_id(encoder_id: &str, n_mels: usize, dim: usize, seed: u64) -> Result<Self> {
        match encoder_id {
            MEL_PROJ => Ok(Self::mel_proj(n_mels, dim, seed)),
            MEL_STATS => Ok(Self::mel_stats(n_mels)),
            other => Err(Error::UnknownEncoder(other.into())),
        }
    }

    /// Sets the standardisation from every window of a training corpus.
    pub fn fit_normalisation<'a>(&mut self, corpus: impl IntoIterator<Item = &'a FeatureWindows>) -> Result<()> {
        let inp = self.stats_len();
        let mut sum = vec![0.0; inp];
        let mut sq = vec![0.0; inp];
        let mut n = 0usize;
        for windows in corpus {
            for w in &windows.windows {
                let s = window_stats(w);
                if s.len() != inp {
                    return Err(Error::DimensionMismatch { expected: inp, actual: s.len() });
                }
                for k in 0..inp {
                    sum[k] += s[k];
                    sq[k] += s[k] * s[k];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for k in 0..inp {
            let m = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - m * m).max(0.0);
            self.input_mean[k] = m;
            self.input_scale[k] = 1.0 / var.sqrt().max(SCALE_FLOOR);
        }
        Ok(())
    }

    fn check(&self, encoder_id: &str) -> Result<()> {
        if encoder_id != MEL_PROJ && encoder_id != MEL_STATS {
            return Err(Error::UnknownEncoder(encoder_id.into()));
        }
        let inp = self.stats_len();
        let shaped = self.input_mean.len() == inp
            && self.input_scale.len() == inp
            && match encoder_id {
                MEL_PROJ => self.weight.len() == self.dim * inp && self.bias.len() == self.dim,
                _ => self.dim == inp,
            };
        if self.encoder_id != encoder_id || !shaped {
            return Err(Error::EncoderMismatch(alloc::format!(
                "parameters for `{}` cannot drive `{encoder_id}`",
                self.encoder_id
            )));
        }
        Ok(())
    }

    fn encode_one(&self, window: &FeatureWindow) -> Vec<f64> {
        let stats = window_stats(window);
        let x: Vec<f64> = stats
            .iter()
            .zip(&self.input_mean)
            .zip(&self.input_scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect();
        if self.encoder_id == MEL_STATS {
            return x;
        }
        let inp = x.len();
        (0..self.dim)
            .map(|r| {
                let row = &self.weight[r * inp..(r + 1) * inp];
                (self.bias[r] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect()
    }
}

/// Per-bin mean, standard deviation, and mean absolute frame-to-frame change over
/// the window's valid frames, concatenated.
pub fn window_stats(window: &FeatureWindow) -> Vec<f64> {
    let rows = window.valid_rows();
    let n_mels = window.matrix.n_mels;
    let mut out = vec![0.0; 3 * n_mels];
    if rows.is_empty() {
        return out;
    }
    let n = rows.len() as f64;
    for b in 0..n_mels {
        let mean = rows.iter().map(|r| r[b]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[b] - mean) * (r[b] - mean)).sum::<f64>() / n;
        let delta = if rows.len() > 1 {
            rows.windows(2).map(|w| (w[1][b] - w[0][b]).abs()).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        out[b] = mean;
        out[n_mels + b] = var.sqrt();
        out[2 * n_mels + b] = delta;
    }
    out
}

/// One embedding per window, in window order.
pub fn encode_windows(
    windows: &FeatureWindows,
    encoder_id: &str,
    params: &EncoderParams,
    clip_id: &str,
) -> Result<EmbeddingSequence> {
    params.check(encoder_id)?;
    if windows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(w) = windows.windows.iter().find(|w| w.matrix.n_mels != params.n_mels) {
        return Err(Error::DimensionMismatch { expected: params.n_mels, actual: w.matrix.n_mels });
    }
    let embeddings = windows.windows.iter().map(|w| params.encode_one(w)).collect();
    EmbeddingSequence::new(clip_id, embeddings)
}
