//! Analytic-versus-numeric gradient comparison for a single labelled sample.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingSequence, TrainedHead};
use crate::error::{Error, Result};

/// Parameters compared per check (all of them when the head is smaller).
pub const SAMPLED_PARAMETERS: usize = 200;

/// Largest `|a - n| / max(|a|, |n|, 1e-8)` over the sampled parameters, where `a`
/// is the backpropagated and `n` the central-difference gradient of the loss.
pub fn grad_check(head: &TrainedHead, seq: &EmbeddingSequence, label: u8, eps: f64, seed: u64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::InvalidParameter("eps must lie in [1e-6, 1e-3]".into()));
    }
    if !(1..=5).contains(&label) {
        return Err(Error::InvalidLabel(label));
    }
    if seq.dim != head.config.input_dim {
        return Err(Error::DimensionMismatch { expected: head.config.input_dim, actual: seq.dim });
    }
    let (net, _) = head.config.network()?;
    let mut p = head.parameters.clone();
    let mut grad = vec![0.0; p.len()];
    net.loss(&p, &seq.embeddings, label, 1.0, Some(&mut grad));

    let picks: Vec<usize> = if p.len() <= SAMPLED_PARAMETERS {
        (0..p.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, p.len(), SAMPLED_PARAMETERS).into_vec()
    };
    let mut worst = 0.0f64;
    for i in picks {
        let orig = p[i];
        p[i] = orig + eps;
        let up = net.loss(&p, &seq.embeddings, label, 1.0, None);
        p[i] = orig - eps;
        let down = net.loss(&p, &seq.embeddings, label, 1.0, None);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let a = grad[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::{HeadConfig, HeadKind};
    use rand::Rng;

    fn sample(seed: u64, t: usize, d: usize) -> EmbeddingSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingSequence::new("g", (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .unwrap()
    }

    #[test]
    fn mlp_matches_finite_differences() {
        let head = TrainedHead::initialise(HeadConfig::new(HeadKind::Mlp, 8, 16, 2), 1).unwrap();
        assert!(grad_check(&head, &sample(2, 4, 8), 3, 1e-4, 0).unwrap() < 1e-4);
    }

    #[test]
    fn rnn_matches_finite_differences() {
        let head = TrainedHead::initialise(HeadConfig::new(HeadKind::Rnn, 8, 16, 2), 1).unwrap();
        assert!(grad_check(&head, &sample(3, 5, 8), 2, 1e-4, 0).unwrap() < 1e-3);
    }

    #[test]
    fn transformer_matches_finite_differences() {
        let head = TrainedHead::initialise(HeadConfig::new(HeadKind::Transformer, 8, 16, 2), 1).unwrap();
        assert!(grad_check(&head, &sample(4, 5, 8), 5, 1e-4, 0).unwrap() < 1e-3);
    }

    #[test]
    fn eps_out_of_range() {
        let head = TrainedHead::initialise(HeadConfig::new(HeadKind::Mlp, 8, 8, 1), 1).unwrap();
        assert!(grad_check(&head, &sample(2, 2, 8), 1, 1e-2, 0).is_err());
    }
}
