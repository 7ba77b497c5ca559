//! Banded dynamic time warping over pitch contours.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PitchContour;

/// Deviations above this are treated as octave-class errors and capped.
pub const COST_CAP_CENTS: f64 = 600.0;
/// Cost of pairing a voiced frame with an unvoiced one.
pub const VOICING_MISMATCH_CENTS: f64 = 100.0;

/// Monotone frame alignment between a user take and the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwAlignment {
    /// `(user_frame, ref_frame)` pairs from `(0, 0)` to `(U-1, R-1)`.
    pub path: Vec<(usize, usize)>,
    pub total_cost_cents: f64,
    /// Mean capped absolute deviation over pairs where both frames are voiced.
    pub mean_deviation_cents: f64,
    /// Signed `user - ref` per path pair, `None` unless both frames are voiced.
    pub deviations: Vec<Option<f64>>,
    pub hop_s: f64,
}

impl DtwAlignment {
    /// Number of path steps that are not `(1, 1)`.
    pub fn non_diagonal_steps(&self) -> usize {
        self.path.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count()
    }
}

pub fn frame_cost(user: Option<f64>, reference: Option<f64>) -> f64 {
    match (user, reference) {
        (Some(u), Some(r)) => (u - r).abs().min(COST_CAP_CENTS),
        (None, None) => 0.0,
        _ => VOICING_MISMATCH_CENTS,
    }
}

// Predecessor codes stored per cell.
const DIAG: u8 = 0;
const UP: u8 = 1;
const LEFT: u8 = 2;

/// Aligns within a Sakoe-Chiba band `|i - j| <= band_frames`.
///
/// Ties prefer the diagonal predecessor, then vertical `(i-1, j)`, then horizontal `(i, j-1)`.
pub fn dtw_align(user: &PitchContour, reference: &PitchContour, band_frames: usize) -> Result<DtwAlignment> {
    let (nu, nr) = (user.len(), reference.len());
    if nu == 0 || nr == 0 {
        return Err(Error::EmptyInput);
    }
    let required = nu.abs_diff(nr);
    if band_frames < required {
        return Err(Error::BandTooNarrow { band: band_frames, required });
    }
    let span = |i: usize| (i.saturating_sub(band_frames), (i + band_frames).min(nr - 1));

    let mut prev = vec![f64::INFINITY; nr];
    let mut cur = vec![f64::INFINITY; nr];
    let mut moves: Vec<Vec<u8>> = Vec::with_capacity(nu);
    for i in 0..nu {
        let (lo, hi) = span(i);
        let mut row = vec![DIAG; hi - lo + 1];
        let u = user.get(i);
        cur.iter_mut().for_each(|c| *c = f64::INFINITY);
        for j in lo..=hi {
            let c = frame_cost(u, reference.get(j));
            if i == 0 && j == 0 {
                cur[0] = c;
                continue;
            }
            let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
            let up = if i > 0 { prev[j] } else { f64::INFINITY };
            let left = if j > 0 { cur[j - 1] } else { f64::INFINITY };
            let (best, mv) = if diag <= up && diag <= left {
                (diag, DIAG)
            } else if up <= left {
                (up, UP)
            } else {
                (left, LEFT)
            };
            cur[j] = c + best;
            row[j - lo] = mv;
        }
        moves.push(row);
        core::mem::swap(&mut prev, &mut cur);
    }
    let total = prev[nr - 1];

    let mut path = Vec::with_capacity(nu + nr);
    let (mut i, mut j) = (nu - 1, nr - 1);
    loop {
        path.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        let lo = span(i).0;
        match moves[i][j - lo] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            UP => i -= 1,
            _ => j -= 1,
        }
    }
    path.reverse();

    let deviations: Vec<Option<f64>> = path
        .iter()
        .map(|&(a, b)| match (user.get(a), reference.get(b)) {
            (Some(u), Some(r)) => Some(u - r),
            _ => None,
        })
        .collect();
    let capped: Vec<f64> = deviations.iter().flatten().map(|d| d.abs().min(COST_CAP_CENTS)).collect();
    let mean_deviation_cents = if capped.is_empty() { 0.0 } else { capped.iter().sum::<f64>() / capped.len() as f64 };

    Ok(DtwAlignment { path, total_cost_cents: total, mean_deviation_cents, deviations, hop_s: user.hop_s })
}
