//! Class-weighted cross-entropy training with AdamW and validation early stopping.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSequence, HeadConfig, Network, TrainMeta, TrainedHead, CLASSES};
use crate::config::ScorerConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// `0` trains on the full batch every step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Share of the data held out for early stopping; `0` disables it.
    pub validation_fraction: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub class_weights: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::from_scorer(&ScorerConfig::default(), 0)
    }
}

impl OptimizerConfig {
    pub fn from_scorer(cfg: &ScorerConfig, seed: u64) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            batch_size: cfg.batch_size,
            max_epochs: cfg.max_epochs,
            patience: cfg.patience,
            validation_fraction: cfg.validation_fraction,
            seed,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            class_weights: true,
        }
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], o: &OptimizerConfig) {
        self.t += 1;
        let bc1 = 1.0 - o.beta1.powi(self.t);
        let bc2 = 1.0 - o.beta2.powi(self.t);
        for i in 0..p.len() {
            p[i] *= 1.0 - o.learning_rate * o.weight_decay;
            self.m[i] = o.beta1 * self.m[i] + (1.0 - o.beta1) * g[i];
            self.v[i] = o.beta2 * self.v[i] + (1.0 - o.beta2) * g[i] * g[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            p[i] -= o.learning_rate * mh / (vh.sqrt() + o.eps);
        }
    }
}

/// Inverse-frequency weights `n / (K n_c)`; absent classes get weight 0.
pub fn class_weights(labels: &[u8]) -> [f64; CLASSES] {
    let mut counts = [0usize; CLASSES];
    for &l in labels {
        counts[usize::from(l - 1)] += 1;
    }
    let n = labels.len() as f64;
    counts.map(|c| if c == 0 { 0.0 } else { n / (CLASSES as f64 * c as f64) })
}

/// Weighted mean loss over `idx`, accumulating the matching gradient when asked.
fn batch_loss(
    net: &Network,
    p: &[f64],
    data: &[(EmbeddingSequence, u8)],
    idx: &[usize],
    weights: &[f64; CLASSES],
    grad: Option<&mut [f64]>,
) -> f64 {
    let total_w: f64 = idx.iter().map(|&i| weights[usize::from(data[i].1 - 1)]).sum();
    let mut loss = 0.0;
    match grad {
        Some(grad) => {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in idx {
                let (seq, label) = &data[i];
                let w = weights[usize::from(label - 1)] / total_w;
                loss += w * net.loss(p, &seq.embeddings, *label, w, Some(grad));
            }
        }
        None => {
            for &i in idx {
                let (seq, label) = &data[i];
                let w = weights[usize::from(label - 1)] / total_w;
                loss += w * net.loss(p, &seq.embeddings, *label, w, None);
            }
        }
    }
    loss
}

/// Trains a head from scratch. Deterministic for a fixed `opt.seed`.
pub fn train_head(data: &[(EmbeddingSequence, u8)], cfg: &HeadConfig, opt: &OptimizerConfig) -> Result<TrainedHead> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (seq, label) in data {
        if !(1..=5).contains(label) {
            return Err(Error::InvalidLabel(*label));
        }
        if seq.is_empty() {
            return Err(Error::EmptyInput);
        }
        if seq.dim != cfg.input_dim {
            return Err(Error::DimensionMismatch { expected: cfg.input_dim, actual: seq.dim });
        }
    }
    if !(0.0..1.0).contains(&opt.validation_fraction) || opt.learning_rate.is_nan() || opt.learning_rate < 0.0 {
        return Err(Error::InvalidParameter("validation_fraction must be in [0, 1) and learning_rate >= 0".into()));
    }
    let (net, lb) = cfg.network()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut params = lb.initialise(&mut rng);

    let mut order: Vec<usize> = (0..data.len()).collect();
    let n_val = (opt.validation_fraction * data.len() as f64).round() as usize;
    let (train_idx, val_idx) = if n_val > 0 && n_val < data.len() {
        order.shuffle(&mut rng);
        let val = order[..n_val].to_vec();
        let mut train = order[n_val..].to_vec();
        train.sort_unstable();
        (train, val)
    } else {
        (order, Vec::new())
    };

    let train_labels: Vec<u8> = train_idx.iter().map(|&i| data[i].1).collect();
    let weights = if opt.class_weights { class_weights(&train_labels) } else { [1.0; CLASSES] };
    let val_weights = weights.map(|w| if w == 0.0 { 1.0 } else { w });

    let mut adam = AdamW::new(params.len());
    let mut grad = vec![0.0; params.len()];
    let mut meta = TrainMeta { seed: opt.seed, ..TrainMeta::default() };
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    let mut stale = 0usize;
    let mut shuffled = train_idx.clone();
    let batch = if opt.batch_size == 0 { shuffled.len() } else { opt.batch_size };

    for epoch in 0..opt.max_epochs {
        if batch < shuffled.len() {
            shuffled.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in shuffled.chunks(batch) {
            let loss = batch_loss(&net, &params, data, chunk, &weights, Some(&mut grad));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
            adam.step(&mut params, &grad, opt);
        }
        let epoch_loss = epoch_loss / seen as f64;
        meta.epoch_losses.push(epoch_loss);
        meta.epochs = epoch + 1;
        meta.final_loss = epoch_loss;

        if !val_idx.is_empty() {
            let vl = batch_loss(&net, &params, data, &val_idx, &val_weights, None);
            if !vl.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            meta.validation_losses.push(vl);
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, params.clone(), epoch));
                stale = 0;
            } else {
                stale += 1;
                if stale >= opt.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, p, epoch)) = best {
        params = p;
        meta.best_epoch = epoch;
        meta.final_loss = meta.epoch_losses[epoch];
    } else {
        meta.best_epoch = meta.epochs.saturating_sub(1);
    }
    TrainedHead::from_parts(cfg.clone(), params, meta)
}

/// Fraction of samples whose argmax class equals the label.
pub fn accuracy(head: &TrainedHead, data: &[(EmbeddingSequence, u8)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut hits = 0usize;
    for (seq, label) in data {
        let (_, arg) = super::predict_score(&super::head_forward(seq, head)?);
        hits += usize::from(arg == *label);
    }
    Ok(hits as f64 / data.len() as f64)
}
