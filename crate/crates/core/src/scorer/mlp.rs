//! Mean-pool over time, then a tanh fully-connected stack.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;

use super::linalg::{affine, affine_backward, segs_mut, LayoutBuilder, Seg};
use super::CLASSES;

#[derive(Debug, Clone)]
pub(crate) struct MlpNet {
    hidden: Vec<(Seg, Seg)>,
    out: (Seg, Seg),
}

pub(crate) struct MlpCache {
    /// `acts[0]` is the pooled input; `acts[l + 1]` the output of hidden layer `l`.
    acts: Vec<Vec<f64>>,
}

impl MlpNet {
    pub fn build(lb: &mut LayoutBuilder, input_dim: usize, hidden_dim: usize, layers: usize) -> Self {
        let hidden = (0..layers)
            .map(|l| lb.linear(&alloc::format!("fc{l}"), hidden_dim, if l == 0 { input_dim } else { hidden_dim }))
            .collect();
        let out = lb.linear("classifier", CLASSES, hidden_dim);
        Self { hidden, out }
    }

    pub fn forward(&self, p: &[f64], seq: &[Vec<f64>]) -> ([f64; CLASSES], MlpCache) {
        let dim = seq[0].len();
        let mut pooled = vec![0.0; dim];
        for x in seq {
            for (a, b) in pooled.iter_mut().zip(x) {
                *a += b;
            }
        }
        pooled.iter_mut().for_each(|v| *v /= seq.len() as f64);
        let mut acts = vec![pooled];
        for (w, b) in &self.hidden {
            let mut h = vec![0.0; w.rows];
            affine(w.of(p), b.of(p), acts.last().unwrap(), &mut h);
            h.iter_mut().for_each(|v| *v = v.tanh());
            acts.push(h);
        }
        let mut logits = [0.0; CLASSES];
        affine(self.out.0.of(p), self.out.1.of(p), acts.last().unwrap(), &mut logits);
        (logits, MlpCache { acts })
    }

    pub fn backward(&self, p: &[f64], cache: &MlpCache, dlogits: &[f64; CLASSES], grad: &mut [f64]) {
        let top = cache.acts.last().unwrap();
        let mut dh = vec![0.0; top.len()];
        {
            let [dw, db] = segs_mut(grad, [self.out.0, self.out.1]);
            affine_backward(self.out.0.of(p), top, dlogits, dw, db, Some(&mut dh));
        }
        for (l, (w, b)) in self.hidden.iter().enumerate().rev() {
            let a = &cache.acts[l + 1];
            let dpre: Vec<f64> = dh.iter().zip(a).map(|(g, y)| g * (1.0 - y * y)).collect();
            let x = &cache.acts[l];
            let mut dx = vec![0.0; x.len()];
            let [dw, db] = segs_mut(grad, [*w, *b]);
            affine_backward(w.of(p), x, &dpre, dw, db, if l > 0 { Some(&mut dx) } else { None });
            dh = dx;
        }
    }
}
