//! Dense row-major helpers and the named parameter layout shared by the heads.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// A named block inside a head's flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Xavier,
    Zeros,
    Ones,
}

/// Offset handle for one segment.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Seg {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Seg {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn of<'a>(&self, p: &'a [f64]) -> &'a [f64] {
        &p[self.offset..self.offset + self.len()]
    }
}

#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    pub segments: Vec<ParamSegment>,
    pub inits: Vec<Init>,
    len: usize,
}

impl LayoutBuilder {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) -> Seg {
        let seg = Seg { offset: self.len, rows, cols };
        self.segments.push(ParamSegment { name: name.into(), offset: self.len, rows, cols });
        self.inits.push(init);
        self.len += rows * cols;
        seg
    }

    pub fn linear(&mut self, name: &str, out: usize, inp: usize) -> (Seg, Seg) {
        (
            self.push(alloc::format!("{name}.weight"), out, inp, Init::Xavier),
            self.push(alloc::format!("{name}.bias"), out, 1, Init::Zeros),
        )
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn initialise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = alloc::vec![0.0; self.len];
        for (seg, init) in self.segments.iter().zip(&self.inits) {
            let block = &mut p[seg.offset..seg.offset + seg.rows * seg.cols];
            match init {
                Init::Zeros => {}
                Init::Ones => block.iter_mut().for_each(|v| *v = 1.0),
                Init::Xavier => {
                    let limit = (6.0 / (seg.rows + seg.cols) as f64).sqrt();
                    block.iter_mut().for_each(|v| *v = rng.random_range(-limit..limit));
                }
            }
        }
        p
    }
}

/// `out = W x + b` for `W` of shape `out.len() x x.len()`.
pub(crate) fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// Accumulates `dW += dy x^T`, `db += dy` and, when given, `dx += W^T dy`.
pub(crate) fn affine_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, xc) in row.iter_mut().zip(x) {
            *d += g * xc;
        }
    }
    if let Some(dx) = dx {
        for (r, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &w[r * cols..(r + 1) * cols];
            for (d, wc) in dx.iter_mut().zip(row) {
                *d += g * wc;
            }
        }
    }
}

/// Mutable views of several disjoint segments of one gradient buffer.
pub(crate) fn segs_mut<const N: usize>(grad: &mut [f64], segs: [Seg; N]) -> [&mut [f64]; N] {
    grad.get_disjoint_mut(segs.map(|s| s.offset..s.offset + s.len())).expect("segments overlap")
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
