//! Post-norm self-attention encoder over window embeddings, mean-pooled before the classifier.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;

use super::linalg::{affine, affine_backward, segs_mut, Init, LayoutBuilder, Seg};
use super::CLASSES;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Sinusoidal position code for step `t` in a `dim`-wide model.
pub fn position_encoding(t: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let freq = 1.0 / (10_000.0f64).powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = t as f64 * freq;
            if i % 2 == 0 { angle.sin() } else { angle.cos() }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    q: (Seg, Seg),
    k: (Seg, Seg),
    v: (Seg, Seg),
    o: (Seg, Seg),
    ln1: (Seg, Seg),
    ff1: (Seg, Seg),
    ff2: (Seg, Seg),
    ln2: (Seg, Seg),
}

#[derive(Debug, Clone)]
pub(crate) struct TransformerNet {
    input: (Seg, Seg),
    layers: Vec<EncoderLayer>,
    out: (Seg, Seg),
    model_dim: usize,
    heads: usize,
    positional: bool,
}

struct NormCache {
    xhat: Vec<Vec<f64>>,
    inv_std: Vec<f64>,
}

struct LayerCache {
    x: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    /// `probs[head][t][s]`.
    probs: Vec<Vec<Vec<f64>>>,
    attn: Vec<Vec<f64>>,
    ln1: NormCache,
    y: Vec<Vec<f64>>,
    pre_ff: Vec<Vec<f64>>,
    act_ff: Vec<Vec<f64>>,
    ln2: NormCache,
}

pub(crate) struct TransformerCache {
    layers: Vec<LayerCache>,
    inputs: Vec<Vec<f64>>,
    pooled: Vec<f64>,
    t_len: usize,
}

fn linear_rows(p: &[f64], (w, b): (Seg, Seg), xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    xs.iter()
        .map(|x| {
            let mut y = vec![0.0; w.rows];
            affine(w.of(p), b.of(p), x, &mut y);
            y
        })
        .collect()
}

fn linear_rows_backward(
    p: &[f64],
    (w, b): (Seg, Seg),
    xs: &[Vec<f64>],
    dys: &[Vec<f64>],
    grad: &mut [f64],
    dxs: Option<&mut [Vec<f64>]>,
) {
    let [dw, db] = segs_mut(grad, [w, b]);
    match dxs {
        Some(dxs) => {
            for ((x, dy), dx) in xs.iter().zip(dys).zip(dxs.iter_mut()) {
                affine_backward(w.of(p), x, dy, dw, db, Some(dx));
            }
        }
        None => {
            for (x, dy) in xs.iter().zip(dys) {
                affine_backward(w.of(p), x, dy, dw, db, None);
            }
        }
    }
}

fn layer_norm(p: &[f64], (g, b): (Seg, Seg), xs: &[Vec<f64>]) -> (Vec<Vec<f64>>, NormCache) {
    let (gamma, beta) = (g.of(p), b.of(p));
    let mut xhat = Vec::with_capacity(xs.len());
    let mut inv_std = Vec::with_capacity(xs.len());
    let ys = xs
        .iter()
        .map(|x| {
            let n = x.len() as f64;
            let m = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            let h: Vec<f64> = x.iter().map(|v| (v - m) * is).collect();
            let y = h.iter().zip(gamma).zip(beta).map(|((h, g), b)| h * g + b).collect();
            xhat.push(h);
            inv_std.push(is);
            y
        })
        .collect();
    (ys, NormCache { xhat, inv_std })
}

fn layer_norm_backward(p: &[f64], (g, b): (Seg, Seg), cache: &NormCache, dys: &[Vec<f64>], grad: &mut [f64]) -> Vec<Vec<f64>> {
    let gamma = g.of(p);
    let [dg, db] = segs_mut(grad, [g, b]);
    dys.iter()
        .zip(&cache.xhat)
        .zip(&cache.inv_std)
        .map(|((dy, h), is)| {
            let n = dy.len() as f64;
            let dh: Vec<f64> = dy.iter().zip(gamma).map(|(d, g)| d * g).collect();
            for k in 0..dy.len() {
                dg[k] += dy[k] * h[k];
                db[k] += dy[k];
            }
            let mean_dh = dh.iter().sum::<f64>() / n;
            let mean_dh_h = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / n;
            dh.iter().zip(h).map(|(d, hv)| is * (d - mean_dh - hv * mean_dh_h)).collect()
        })
        .collect()
}

fn add_rows(a: &mut [Vec<f64>], b: &[Vec<f64>]) {
    for (x, y) in a.iter_mut().zip(b) {
        for (u, v) in x.iter_mut().zip(y) {
            *u += v;
        }
    }
}

impl TransformerNet {
    pub fn build(
        lb: &mut LayoutBuilder,
        input_dim: usize,
        model_dim: usize,
        layers: usize,
        heads: usize,
        positional: bool,
    ) -> Self {
        let ffn = 2 * model_dim;
        let input = lb.linear("input_proj", model_dim, input_dim);
        let layers = (0..layers)
            .map(|l| {
                let name = |s: &str| alloc::format!("enc{l}.{s}");
                EncoderLayer {
                    q: lb.linear(&name("attn.q"), model_dim, model_dim),
                    k: lb.linear(&name("attn.k"), model_dim, model_dim),
                    v: lb.linear(&name("attn.v"), model_dim, model_dim),
                    o: lb.linear(&name("attn.out"), model_dim, model_dim),
                    ln1: (
                        lb.push(name("norm1.gamma"), model_dim, 1, Init::Ones),
                        lb.push(name("norm1.beta"), model_dim, 1, Init::Zeros),
                    ),
                    ff1: lb.linear(&name("ffn.up"), ffn, model_dim),
                    ff2: lb.linear(&name("ffn.down"), model_dim, ffn),
                    ln2: (
                        lb.push(name("norm2.gamma"), model_dim, 1, Init::Ones),
                        lb.push(name("norm2.beta"), model_dim, 1, Init::Zeros),
                    ),
                }
            })
            .collect();
        let out = lb.linear("classifier", CLASSES, model_dim);
        Self { input, layers, out, model_dim, heads, positional }
    }

    pub fn forward(&self, p: &[f64], seq: &[Vec<f64>]) -> ([f64; CLASSES], TransformerCache) {
        let t_len = seq.len();
        let dh = self.model_dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut x = linear_rows(p, self.input, seq);
        if self.positional {
            for (t, row) in x.iter_mut().enumerate() {
                for (v, e) in row.iter_mut().zip(position_encoding(t, self.model_dim)) {
                    *v += e;
                }
            }
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let q = linear_rows(p, layer.q, &x);
            let k = linear_rows(p, layer.k, &x);
            let v = linear_rows(p, layer.v, &x);
            let mut attn = vec![vec![0.0; self.model_dim]; t_len];
            let mut probs = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let mut ph = Vec::with_capacity(t_len);
                for t in 0..t_len {
                    let scores: Vec<f64> = (0..t_len)
                        .map(|s| q[t][cols.clone()].iter().zip(&k[s][cols.clone()]).map(|(a, b)| a * b).sum::<f64>() * scale)
                        .collect();
                    let row = super::linalg::softmax(&scores);
                    for (s, w) in row.iter().enumerate() {
                        for (o, vv) in attn[t][cols.clone()].iter_mut().zip(&v[s][cols.clone()]) {
                            *o += w * vv;
                        }
                    }
                    ph.push(row);
                }
                probs.push(ph);
            }
            let mut r1 = linear_rows(p, layer.o, &attn);
            add_rows(&mut r1, &x);
            let (y, ln1) = layer_norm(p, layer.ln1, &r1);
            let pre_ff = linear_rows(p, layer.ff1, &y);
            let act_ff: Vec<Vec<f64>> = pre_ff.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
            let mut r2 = linear_rows(p, layer.ff2, &act_ff);
            add_rows(&mut r2, &y);
            let (z, ln2) = layer_norm(p, layer.ln2, &r2);
            caches.push(LayerCache { x: core::mem::replace(&mut x, z), q, k, v, probs, attn, ln1, y, pre_ff, act_ff, ln2 });
        }
        let mut pooled = vec![0.0; self.model_dim];
        for row in &x {
            for (a, b) in pooled.iter_mut().zip(row) {
                *a += b / t_len as f64;
            }
        }
        let mut logits = [0.0; CLASSES];
        affine(self.out.0.of(p), self.out.1.of(p), &pooled, &mut logits);
        (logits, TransformerCache { layers: caches, inputs: seq.to_vec(), pooled, t_len })
    }

    pub fn backward(&self, p: &[f64], cache: &TransformerCache, dlogits: &[f64; CLASSES], grad: &mut [f64]) {
        let t_len = cache.t_len;
        let dh = self.model_dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dpooled = vec![0.0; self.model_dim];
        {
            let [dw, db] = segs_mut(grad, [self.out.0, self.out.1]);
            affine_backward(self.out.0.of(p), &cache.pooled, dlogits, dw, db, Some(&mut dpooled));
        }
        let mut dz: Vec<Vec<f64>> = vec![dpooled.iter().map(|g| g / t_len as f64).collect(); t_len];

        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let dr2 = layer_norm_backward(p, layer.ln2, &c.ln2, &dz, grad);
            let mut d_act = vec![vec![0.0; 2 * self.model_dim]; t_len];
            linear_rows_backward(p, layer.ff2, &c.act_ff, &dr2, grad, Some(&mut d_act));
            let d_pre: Vec<Vec<f64>> = d_act
                .iter()
                .zip(&c.pre_ff)
                .map(|(d, x)| d.iter().zip(x).map(|(g, &v)| g * gelu_grad(v)).collect())
                .collect();
            let mut dy = dr2;
            linear_rows_backward(p, layer.ff1, &c.y, &d_pre, grad, Some(&mut dy));
            let dr1 = layer_norm_backward(p, layer.ln1, &c.ln1, &dy, grad);

            let mut d_attn = vec![vec![0.0; self.model_dim]; t_len];
            linear_rows_backward(p, layer.o, &c.attn, &dr1, grad, Some(&mut d_attn));
            let mut dq = vec![vec![0.0; self.model_dim]; t_len];
            let mut dk = vec![vec![0.0; self.model_dim]; t_len];
            let mut dv = vec![vec![0.0; self.model_dim]; t_len];
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                for t in 0..t_len {
                    let probs = &c.probs[h][t];
                    let dp: Vec<f64> = (0..t_len)
                        .map(|s| d_attn[t][cols.clone()].iter().zip(&c.v[s][cols.clone()]).map(|(a, b)| a * b).sum())
                        .collect();
                    let dot: f64 = probs.iter().zip(&dp).map(|(a, b)| a * b).sum();
                    for s in 0..t_len {
                        let w = probs[s];
                        for (d, g) in dv[s][cols.clone()].iter_mut().zip(&d_attn[t][cols.clone()]) {
                            *d += w * g;
                        }
                        let ds = w * (dp[s] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for j in cols.clone() {
                            dq[t][j] += ds * c.k[s][j];
                            dk[s][j] += ds * c.q[t][j];
                        }
                    }
                }
            }
            let mut dx = dr1;
            linear_rows_backward(p, layer.q, &c.x, &dq, grad, Some(&mut dx));
            linear_rows_backward(p, layer.k, &c.x, &dk, grad, Some(&mut dx));
            linear_rows_backward(p, layer.v, &c.x, &dv, grad, Some(&mut dx));
            dz = dx;
        }
        linear_rows_backward(p, self.input, &cache.inputs, &dz, grad, None);
    }
}
