//! Stacked GRU; the last layer's final state feeds the classifier.
//!
//! Gate order inside the `3H` blocks is update `z`, reset `r`, candidate `n`:
//! `n = tanh(W_n x + b_n + r * (U_n h + c_n))`, `h' = (1 - z) * n + z * h`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;

use super::linalg::{affine, affine_backward, segs_mut, sigmoid, Init, LayoutBuilder, Seg};
use super::CLASSES;

#[derive(Debug, Clone, Copy)]
struct GruLayer {
    w: Seg,
    u: Seg,
    bw: Seg,
    bu: Seg,
}

#[derive(Debug, Clone)]
pub(crate) struct GruNet {
    layers: Vec<GruLayer>,
    hidden: usize,
    out: (Seg, Seg),
}

struct Step {
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h + c_n`, before the reset gate.
    a: Vec<f64>,
    h_prev: Vec<f64>,
}

pub(crate) struct GruCache {
    /// Per layer: its input sequence and its steps.
    inputs: Vec<Vec<Vec<f64>>>,
    steps: Vec<Vec<Step>>,
    last: Vec<f64>,
}

impl GruNet {
    pub fn build(lb: &mut LayoutBuilder, input_dim: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input_dim } else { hidden };
                GruLayer {
                    w: lb.push(alloc::format!("gru{l}.w_ih"), 3 * hidden, inp, Init::Xavier),
                    u: lb.push(alloc::format!("gru{l}.w_hh"), 3 * hidden, hidden, Init::Xavier),
                    bw: lb.push(alloc::format!("gru{l}.b_ih"), 3 * hidden, 1, Init::Zeros),
                    bu: lb.push(alloc::format!("gru{l}.b_hh"), 3 * hidden, 1, Init::Zeros),
                }
            })
            .collect();
        let out = lb.linear("classifier", CLASSES, hidden);
        Self { layers, hidden, out }
    }

    pub fn forward(&self, p: &[f64], seq: &[Vec<f64>]) -> ([f64; CLASSES], GruCache) {
        let h = self.hidden;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut steps_all = Vec::with_capacity(self.layers.len());
        let mut xs: Vec<Vec<f64>> = seq.to_vec();
        for layer in &self.layers {
            let mut state = vec![0.0; h];
            let mut outs = Vec::with_capacity(xs.len());
            let mut steps = Vec::with_capacity(xs.len());
            let (mut gx, mut gh) = (vec![0.0; 3 * h], vec![0.0; 3 * h]);
            for x in &xs {
                affine(layer.w.of(p), layer.bw.of(p), x, &mut gx);
                affine(layer.u.of(p), layer.bu.of(p), &state, &mut gh);
                let z: Vec<f64> = (0..h).map(|k| sigmoid(gx[k] + gh[k])).collect();
                let r: Vec<f64> = (0..h).map(|k| sigmoid(gx[h + k] + gh[h + k])).collect();
                let a: Vec<f64> = gh[2 * h..].to_vec();
                let n: Vec<f64> = (0..h).map(|k| (gx[2 * h + k] + r[k] * a[k]).tanh()).collect();
                let next: Vec<f64> = (0..h).map(|k| (1.0 - z[k]) * n[k] + z[k] * state[k]).collect();
                steps.push(Step { z, r, n, a, h_prev: core::mem::replace(&mut state, next.clone()) });
                outs.push(next);
            }
            inputs.push(core::mem::replace(&mut xs, outs));
            steps_all.push(steps);
        }
        let last = xs.last().cloned().unwrap_or_else(|| vec![0.0; h]);
        let mut logits = [0.0; CLASSES];
        affine(self.out.0.of(p), self.out.1.of(p), &last, &mut logits);
        (logits, GruCache { inputs, steps: steps_all, last })
    }

    pub fn backward(&self, p: &[f64], cache: &GruCache, dlogits: &[f64; CLASSES], grad: &mut [f64]) {
        let h = self.hidden;
        let t_len = cache.inputs[0].len();
        let mut d_out = vec![vec![0.0; h]; t_len];
        {
            let [dw, db] = segs_mut(grad, [self.out.0, self.out.1]);
            affine_backward(self.out.0.of(p), &cache.last, dlogits, dw, db, Some(&mut d_out[t_len - 1]));
        }
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let xs = &cache.inputs[l];
            let in_dim = xs[0].len();
            let mut d_in = vec![vec![0.0; in_dim]; t_len];
            let mut dh_next = vec![0.0; h];
            let [dw, du, dbw, dbu] = segs_mut(grad, [layer.w, layer.u, layer.bw, layer.bu]);
            for t in (0..t_len).rev() {
                let s = &cache.steps[l][t];
                let dh: Vec<f64> = (0..h).map(|k| d_out[t][k] + dh_next[k]).collect();
                let mut gx = vec![0.0; 3 * h];
                let mut ghh = vec![0.0; 3 * h];
                let mut dh_prev = vec![0.0; h];
                for k in 0..h {
                    let dn = dh[k] * (1.0 - s.z[k]);
                    let dz = dh[k] * (s.h_prev[k] - s.n[k]);
                    dh_prev[k] = dh[k] * s.z[k];
                    let dn_pre = dn * (1.0 - s.n[k] * s.n[k]);
                    let dr = dn_pre * s.a[k];
                    let dz_pre = dz * s.z[k] * (1.0 - s.z[k]);
                    let dr_pre = dr * s.r[k] * (1.0 - s.r[k]);
                    gx[k] = dz_pre;
                    gx[h + k] = dr_pre;
                    gx[2 * h + k] = dn_pre;
                    ghh[k] = dz_pre;
                    ghh[h + k] = dr_pre;
                    ghh[2 * h + k] = dn_pre * s.r[k];
                }
                affine_backward(layer.w.of(p), &xs[t], &gx, dw, dbw, if l > 0 { Some(&mut d_in[t]) } else { None });
                affine_backward(layer.u.of(p), &s.h_prev, &ghh, du, dbu, Some(&mut dh_prev));
                dh_next = dh_prev;
            }
            d_out = d_in;
        }
    }
}
