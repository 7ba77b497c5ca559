//! Reference-free scoring: window encoders, three sequence heads, training, and the
//! per-dimension registry.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use crate::math::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod encoder;
pub mod gradcheck;
mod gru;
pub mod infer;
mod linalg;
mod mlp;
pub mod registry;
pub mod train;
mod transformer;

pub use encoder::{encode_windows, window_stats, EncoderParams, MEL_PROJ, MEL_STATS};
pub use gradcheck::grad_check;
pub use infer::{average_distributions, infer_song, score_mel, score_windows, InferMode, CLIP30_SEGMENT_S};
pub use linalg::ParamSegment;
pub use registry::{build_registry, evaluate_candidate, select_best, Candidate, CandidateScore, DimensionRegistry, LabelJudge, RegistryEntry, TierJudge, ValidationClip};
pub use train::{accuracy, class_weights, train_head, OptimizerConfig};
pub use transformer::position_encoding;

use gru::{GruCache, GruNet};
use linalg::LayoutBuilder;
use mlp::{MlpCache, MlpNet};
use transformer::{TransformerCache, TransformerNet};

/// Number of rating classes (scores 1 through 5).
pub const CLASSES: usize = 5;

/// The four expert rating dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Breath,
    Timbre,
    Emotion,
    Technique,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Breath, Dimension::Timbre, Dimension::Emotion, Dimension::Technique];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Breath => "breath",
            Dimension::Timbre => "timbre",
            Dimension::Emotion => "emotion",
            Dimension::Technique => "technique",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(alloc::format!("unknown dimension `{s}`")))
    }
}

/// One embedding per analysis window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
    pub clip_id: String,
}

impl EmbeddingSequence {
    pub fn new(clip_id: impl Into<String>, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let dim = embeddings.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        for e in &embeddings {
            if e.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: e.len() });
            }
            if e.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite embedding value".into()));
            }
        }
        Ok(Self { embeddings, dim, clip_id: clip_id.into() })
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }
}

/// Downstream head architecture. The declaration order is the registry tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Mlp,
    Rnn,
    Transformer,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Mlp => "mlp",
            HeadKind::Rnn => "rnn",
            HeadKind::Transformer => "transformer",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(HeadKind::Mlp),
            "rnn" => Ok(HeadKind::Rnn),
            "transformer" => Ok(HeadKind::Transformer),
            other => Err(Error::InvalidParameter(alloc::format!("unknown head kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub classes: usize,
    /// Transformer only.
    pub attention_heads: usize,
    /// Transformer only.
    pub positional_encoding: bool,
}

impl HeadConfig {
    pub fn new(kind: HeadKind, input_dim: usize, hidden_dim: usize, layers: usize) -> Self {
        Self { kind, input_dim, hidden_dim, layers, classes: CLASSES, attention_heads: 2, positional_encoding: true }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.classes != CLASSES {
            return bad("head must have exactly 5 classes");
        }
        if self.hidden_dim < 8 {
            return bad("hidden_dim must be at least 8");
        }
        if self.layers == 0 || self.input_dim == 0 {
            return bad("layers and input_dim must be positive");
        }
        if self.kind == HeadKind::Transformer
            && (self.attention_heads == 0 || !self.hidden_dim.is_multiple_of(self.attention_heads))
        {
            return bad("hidden_dim must be divisible by attention_heads");
        }
        Ok(())
    }

    pub(crate) fn network(&self) -> Result<(Network, LayoutBuilder)> {
        self.validate()?;
        let mut lb = LayoutBuilder::default();
        let net = match self.kind {
            HeadKind::Mlp => Network::Mlp(MlpNet::build(&mut lb, self.input_dim, self.hidden_dim, self.layers)),
            HeadKind::Rnn => Network::Rnn(GruNet::build(&mut lb, self.input_dim, self.hidden_dim, self.layers)),
            HeadKind::Transformer => Network::Transformer(TransformerNet::build(
                &mut lb,
                self.input_dim,
                self.hidden_dim,
                self.layers,
                self.attention_heads,
                self.positional_encoding,
            )),
        };
        Ok((net, lb))
    }

    /// Named parameter blocks in storage order.
    pub fn layout(&self) -> Result<Vec<ParamSegment>> {
        Ok(self.network()?.1.segments)
    }

    pub fn parameter_count(&self) -> Result<usize> {
        Ok(self.network()?.1.len())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMeta {
    pub seed: u64,
    pub epochs: usize,
    pub final_loss: f64,
    #[serde(default)]
    pub epoch_losses: Vec<f64>,
    #[serde(default)]
    pub validation_losses: Vec<f64>,
    #[serde(default)]
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedHead {
    pub config: HeadConfig,
    pub segments: Vec<ParamSegment>,
    pub parameters: Vec<f64>,
    pub train_meta: TrainMeta,
}

impl TrainedHead {
    /// A freshly initialised, untrained head.
    pub fn initialise(config: HeadConfig, seed: u64) -> Result<Self> {
        let (_, lb) = config.network()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parameters = lb.initialise(&mut rng);
        Ok(Self {
            config,
            segments: lb.segments,
            parameters,
            train_meta: TrainMeta { seed, ..TrainMeta::default() },
        })
    }

    pub fn from_parts(config: HeadConfig, parameters: Vec<f64>, train_meta: TrainMeta) -> Result<Self> {
        let segments = config.layout()?;
        let expected: usize = segments.iter().map(|s| s.rows * s.cols).sum();
        if parameters.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: parameters.len() });
        }
        if parameters.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite head parameter".into()));
        }
        Ok(Self { config, segments, parameters, train_meta })
    }

    /// Parameters of one named block.
    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.parameters[s.offset..s.offset + s.rows * s.cols])
    }
}

pub(crate) enum Network {
    Mlp(MlpNet),
    Rnn(GruNet),
    Transformer(TransformerNet),
}

pub(crate) enum Cache {
    Mlp(MlpCache),
    Rnn(GruCache),
    Transformer(TransformerCache),
}

impl Network {
    pub fn forward(&self, p: &[f64], seq: &[Vec<f64>]) -> ([f64; CLASSES], Cache) {
        match self {
            Network::Mlp(n) => {
                let (l, c) = n.forward(p, seq);
                (l, Cache::Mlp(c))
            }
            Network::Rnn(n) => {
                let (l, c) = n.forward(p, seq);
                (l, Cache::Rnn(c))
            }
            Network::Transformer(n) => {
                let (l, c) = n.forward(p, seq);
                (l, Cache::Transformer(c))
            }
        }
    }

    pub fn backward(&self, p: &[f64], cache: &Cache, dlogits: &[f64; CLASSES], grad: &mut [f64]) {
        match (self, cache) {
            (Network::Mlp(n), Cache::Mlp(c)) => n.backward(p, c, dlogits, grad),
            (Network::Rnn(n), Cache::Rnn(c)) => n.backward(p, c, dlogits, grad),
            (Network::Transformer(n), Cache::Transformer(c)) => n.backward(p, c, dlogits, grad),
            _ => unreachable!("cache from a different network"),
        }
    }

    /// Cross-entropy against `label` (1..=5); adds `weight * dCE/dp` to `grad` when given.
    pub fn loss(&self, p: &[f64], seq: &[Vec<f64>], label: u8, weight: f64, grad: Option<&mut [f64]>) -> f64 {
        let (logits, cache) = self.forward(p, seq);
        let (ce, mut dlogits) = cross_entropy(&logits, label);
        if let Some(grad) = grad {
            dlogits.iter_mut().for_each(|g| *g *= weight);
            self.backward(p, &cache, &dlogits, grad);
        }
        ce
    }
}

/// Loss and its gradient with respect to the logits.
pub(crate) fn cross_entropy(logits: &[f64; CLASSES], label: u8) -> (f64, [f64; CLASSES]) {
    let target = usize::from(label - 1);
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let mut d = [0.0; CLASSES];
    for (k, (dk, z)) in d.iter_mut().zip(logits).enumerate() {
        *dk = (z - lse).exp() - if k == target { 1.0 } else { 0.0 };
    }
    (lse - logits[target], d)
}

fn check_sequence(seq: &EmbeddingSequence, head: &TrainedHead) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::EmptyInput);
    }
    if seq.dim != head.config.input_dim {
        return Err(Error::DimensionMismatch { expected: head.config.input_dim, actual: seq.dim });
    }
    Ok(())
}

/// Class distribution for one sequence.
pub fn head_forward(seq: &EmbeddingSequence, head: &TrainedHead) -> Result<[f64; CLASSES]> {
    check_sequence(seq, head)?;
    let (net, _) = head.config.network()?;
    let (logits, _) = net.forward(&head.parameters, &seq.embeddings);
    let probs = linalg::softmax(&logits);
    let mut out = [0.0; CLASSES];
    out.copy_from_slice(&probs);
    Ok(out)
}

/// Expected score `sum k * p_k` and the smallest class attaining the maximum.
pub fn predict_score(distribution: &[f64; CLASSES]) -> (f64, u8) {
    let expected = distribution.iter().enumerate().map(|(k, p)| (k + 1) as f64 * p).sum();
    let mut best = 0;
    for k in 1..CLASSES {
        if distribution[k] > distribution[best] {
            best = k;
        }
    }
    (expected, best as u8 + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub distribution: [f64; CLASSES],
    pub expected: f64,
    pub argmax: u8,
}

impl DimensionScore {
    pub fn from_distribution(distribution: [f64; CLASSES]) -> Self {
        let (expected, argmax) = predict_score(&distribution);
        Self { distribution, expected, argmax }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub clip_id: String,
    pub scores: BTreeMap<Dimension, DimensionScore>,
}

impl DimensionScores {
    pub fn expected(&self, dim: Dimension) -> Option<f64> {
        self.scores.get(&dim).map(|s| s.expected)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn seq_from(rows: Vec<Vec<f64>>) -> EmbeddingSequence {
        EmbeddingSequence::new("c", rows).unwrap()
    }

    fn random_rows(seed: u64, t: usize, d: usize) -> Vec<Vec<f64>> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn head(kind: HeadKind, pe: bool) -> TrainedHead {
        let mut cfg = HeadConfig::new(kind, 6, 16, 2);
        cfg.positional_encoding = pe;
        TrainedHead::initialise(cfg, 11).unwrap()
    }

    #[test]
    fn predict_score_examples() {
        assert_eq!(predict_score(&[0.0, 0.0, 0.0, 1.0, 0.0]), (4.0, 4));
        let (e, a) = predict_score(&[0.2; 5]);
        assert!((e - 3.0).abs() < 1e-12);
        assert_eq!(a, 1);
        let (e, a) = predict_score(&[0.0, 0.1, 0.2, 0.3, 0.4]);
        assert!((e - 4.0).abs() < 1e-12);
        assert_eq!(a, 5);
    }

    #[test]
    fn parameter_counts_match_arithmetic() {
        let (d, h) = (6usize, 16usize);
        let mlp = HeadConfig::new(HeadKind::Mlp, d, h, 2).parameter_count().unwrap();
        assert_eq!(mlp, (h * d + h) + (h * h + h) + (5 * h + 5));
        let rnn = HeadConfig::new(HeadKind::Rnn, d, h, 2).parameter_count().unwrap();
        let gru = |inp: usize| 3 * h * inp + 3 * h * h + 6 * h;
        assert_eq!(rnn, gru(d) + gru(h) + 5 * h + 5);
        let tf = HeadConfig::new(HeadKind::Transformer, d, h, 1).parameter_count().unwrap();
        let layer = 4 * (h * h + h) + 2 * h + (2 * h * h + 2 * h) + (h * 2 * h + h) + 2 * h;
        assert_eq!(tf, (h * d + h) + layer + 5 * h + 5);
    }

    #[test]
    fn config_validation() {
        let mut c = HeadConfig::new(HeadKind::Mlp, 4, 7, 1);
        assert!(c.validate().is_err());
        c.hidden_dim = 8;
        c.classes = 4;
        assert!(c.validate().is_err());
        let mut t = HeadConfig::new(HeadKind::Transformer, 4, 9, 1);
        t.attention_heads = 2;
        assert!(t.validate().is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let h = head(HeadKind::Mlp, true);
        let seq = seq_from(random_rows(1, 3, 5));
        assert!(matches!(head_forward(&seq, &h), Err(Error::DimensionMismatch { expected: 6, actual: 5 })));
    }

    #[test]
    fn rnn_is_order_sensitive() {
        let h = head(HeadKind::Rnn, true);
        let rows = vec![vec![1.0, -0.5, 0.25, 0.0, 0.8, -1.0], vec![-1.0, 0.5, 0.9, -0.3, 0.0, 0.4]];
        let mut rev = rows.clone();
        rev.reverse();
        let a = head_forward(&seq_from(rows), &h).unwrap();
        let b = head_forward(&seq_from(rev), &h).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
    }

    #[test]
    fn transformer_position_encoding_breaks_permutation_invariance() {
        let rows = random_rows(3, 4, 6);
        let mut perm = rows.clone();
        perm.swap(0, 3);
        let with = head(HeadKind::Transformer, true);
        let a = head_forward(&seq_from(rows.clone()), &with).unwrap();
        let b = head_forward(&seq_from(perm.clone()), &with).unwrap();
        assert!(a.iter().zip(&b).any(|(x, y)| (x - y).abs() > 1e-6));
        let without = head(HeadKind::Transformer, false);
        let a = head_forward(&seq_from(rows), &without).unwrap();
        let b = head_forward(&seq_from(perm), &without).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn from_parts_checks_count() {
        let h = head(HeadKind::Mlp, true);
        assert!(TrainedHead::from_parts(h.config.clone(), h.parameters[1..].to_vec(), TrainMeta::default()).is_err());
        let back = TrainedHead::from_parts(h.config.clone(), h.parameters.clone(), h.train_meta.clone()).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.segment("classifier.bias").unwrap().len(), 5);
    }

    #[test]
    fn dimension_round_trip() {
        for d in Dimension::ALL {
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), d);
        }
        assert!("pitch".parse::<Dimension>().is_err());
    }

    proptest! {
        #[test]
        fn softmax_outputs_normalised(seed in 0u64..1000, t in 1usize..6, kind in 0usize..3) {
            let kind = [HeadKind::Mlp, HeadKind::Rnn, HeadKind::Transformer][kind];
            let h = TrainedHead::initialise(HeadConfig::new(kind, 6, 8, 1), seed).unwrap();
            let p = head_forward(&seq_from(random_rows(seed, t, 6)), &h).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn mlp_is_permutation_invariant(seed in 0u64..1000, t in 2usize..8, a in 0usize..8, b in 0usize..8) {
            let h = TrainedHead::initialise(HeadConfig::new(HeadKind::Mlp, 6, 8, 2), seed).unwrap();
            let rows = random_rows(seed, t, 6);
            let mut perm = rows.clone();
            perm.swap(a % t, b % t);
            let x = head_forward(&seq_from(rows), &h).unwrap();
            let y = head_forward(&seq_from(perm), &h).unwrap();
            for (u, v) in x.iter().zip(&y) {
                prop_assert!((u - v).abs() < 1e-12);
            }
        }

        #[test]
        fn expected_score_monotone_under_upward_shift(raw in proptest::array::uniform5(0.01f64..1.0), i in 0usize..4, step in 1usize..4, frac in 0.01f64..1.0) {
            let s: f64 = raw.iter().sum();
            let mut p = raw.map(|v| v / s);
            let j = (i + step).min(4);
            prop_assume!(j > i);
            let (before, _) = predict_score(&p);
            let moved = p[i] * frac;
            p[i] -= moved;
            p[j] += moved;
            let (after, _) = predict_score(&p);
            prop_assert!(after > before);
        }
    }
}
