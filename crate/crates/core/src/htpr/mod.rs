//! Tiered perceptual ranking: tiering by predicted score, blinded triplet sampling,
//! judgment sessions, and the annotation analytics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::math::Float;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod agreement;

pub use agreement::{
    agreement_stats, aggregate_ratings, audit_forced_distribution, Agreement, AnnotationRecord, ClipRating,
    ForcedDistributionAudit, RatingAggregate,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    High,
    Medium,
    Low,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::High, Tier::Medium, Tier::Low];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierAssignment {
    pub tiers: BTreeMap<String, Tier>,
    pub ranking_key: BTreeMap<String, f64>,
}

impl TierAssignment {
    /// Members of `tier`, best key first, ties by ascending id.
    pub fn members(&self, tier: Tier) -> Vec<String> {
        let mut m: Vec<&String> = self.tiers.iter().filter(|(_, t)| **t == tier).map(|(id, _)| id).collect();
        m.sort_by(|a, b| self.ranking_key[*b].total_cmp(&self.ranking_key[*a]).then_with(|| a.cmp(b)));
        m.into_iter().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }

    /// Checks the size and ordering invariants, e.g. after loading from disk.
    pub fn validate(&self) -> Result<()> {
        if self.tiers.len() != self.ranking_key.len() || self.tiers.keys().ne(self.ranking_key.keys()) {
            return Err(Error::InvalidParameter("tiers and ranking keys name different clips".into()));
        }
        if self.ranking_key.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite ranking key".into()));
        }
        let rebuilt = assign_tiers(&self.ranking_key)?;
        if rebuilt.tiers != self.tiers {
            return Err(Error::InvalidParameter("tier labels disagree with ranking keys".into()));
        }
        Ok(())
    }
}

/// Terciles of the clips sorted by key (descending, ties by ascending id); the
/// remainder goes to the top tiers.
pub fn assign_tiers(keys: &BTreeMap<String, f64>) -> Result<TierAssignment> {
    let n = keys.len();
    if n < 3 {
        return Err(Error::TooFewClips(n));
    }
    if keys.values().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite ranking key".into()));
    }
    let mut order: Vec<(&String, f64)> = keys.iter().map(|(k, v)| (k, *v)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let base = n / 3;
    let rem = n % 3;
    let high = base + usize::from(rem > 0);
    let medium = base + usize::from(rem > 1);
    let tiers = order
        .iter()
        .enumerate()
        .map(|(i, (id, _))| {
            let t = if i < high {
                Tier::High
            } else if i < high + medium {
                Tier::Medium
            } else {
                Tier::Low
            };
            ((*id).clone(), t)
        })
        .collect();
    Ok(TierAssignment { tiers, ranking_key: keys.clone() })
}

/// Listening position within a triplet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Position {
    A,
    B,
    C,
}

impl Position {
    pub const ALL: [Position; 3] = [Position::A, Position::B, Position::C];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub id: String,
    pub high_clip: String,
    pub medium_clip: String,
    pub low_clip: String,
    /// Tier heard at positions A, B and C.
    pub presentation_order: [Tier; 3],
}

impl Triplet {
    pub fn clip(&self, tier: Tier) -> &str {
        match tier {
            Tier::High => &self.high_clip,
            Tier::Medium => &self.medium_clip,
            Tier::Low => &self.low_clip,
        }
    }

    pub fn clip_at(&self, pos: Position) -> &str {
        self.clip(self.presentation_order[pos.index()])
    }

    /// Tiers of a best-to-worst ranking of positions.
    pub fn tiers_of(&self, order: &[Position; 3]) -> [Tier; 3] {
        order.map(|p| self.presentation_order[p.index()])
    }
}

pub fn triplet_id(index: usize) -> String {
    alloc::format!("t{index:04}")
}

/// Draws `n` triplets, one clip per tier each. Every tier deals from its own
/// shuffled deck, which is reshuffled once exhausted.
pub fn sample_triplets(t: &TierAssignment, n: usize, seed: u64) -> Result<Vec<Triplet>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n_triplets must be at least 1".into()));
    }
    let pools: Vec<Vec<String>> = Tier::ALL.iter().map(|&tier| t.members(tier)).collect();
    if pools.iter().any(Vec::is_empty) {
        return Err(Error::EmptyTier);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut decks: [Vec<String>; 3] = Default::default();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut drawn: [String; 3] = Default::default();
        for k in 0..3 {
            if decks[k].is_empty() {
                decks[k] = pools[k].clone();
                decks[k].shuffle(&mut rng);
            }
            drawn[k] = decks[k].pop().expect("refilled deck");
        }
        let mut presentation_order = Tier::ALL;
        presentation_order.shuffle(&mut rng);
        let [high_clip, medium_clip, low_clip] = drawn;
        out.push(Triplet { id: triplet_id(i), high_clip, medium_clip, low_clip, presentation_order });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub triplet_id: String,
    pub evaluator_id: String,
    pub consistent: bool,
    /// Positions ranked best to worst, when the evaluator supplied a ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceived_order: Option<[Position; 3]>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HtprSession {
    pub id: String,
    pub tier_assignment: TierAssignment,
    pub triplets: Vec<Triplet>,
    pub judgments: Vec<Judgment>,
    pub seed: u64,
}

impl HtprSession {
    pub fn create(id: impl Into<String>, tier_assignment: TierAssignment, n: usize, seed: u64) -> Result<Self> {
        let triplets = sample_triplets(&tier_assignment, n, seed)?;
        Ok(Self { id: id.into(), tier_assignment, triplets, judgments: Vec::new(), seed })
    }

    pub fn triplet(&self, id: &str) -> Option<&Triplet> {
        self.triplets.iter().find(|t| t.id == id)
    }

    /// Checks a judgment against the session without recording it.
    pub fn check(&self, j: &Judgment) -> Result<()> {
        let triplet = self.triplet(&j.triplet_id).ok_or_else(|| Error::UnknownTriplet(j.triplet_id.clone()))?;
        if self.judgments.iter().any(|o| o.triplet_id == j.triplet_id && o.evaluator_id == j.evaluator_id) {
            return Err(Error::DuplicateJudgment { triplet: j.triplet_id.clone(), evaluator: j.evaluator_id.clone() });
        }
        if let Some(order) = &j.perceived_order {
            let distinct: BTreeSet<Position> = order.iter().copied().collect();
            if distinct.len() != 3 {
                return Err(Error::InvalidParameter("perceived_order must be a permutation of A, B, C".into()));
            }
            let graded = triplet.tiers_of(order) == Tier::ALL;
            if graded != j.consistent {
                return Err(Error::InconsistentJudgment);
            }
        }
        Ok(())
    }

    pub fn submit(&mut self, j: Judgment) -> Result<()> {
        self.check(&j)?;
        self.judgments.push(j);
        Ok(())
    }

    /// Lowest-index triplet this evaluator has not judged.
    pub fn next_for(&self, evaluator_id: &str) -> Option<(usize, &Triplet)> {
        let done: BTreeSet<&str> = self
            .judgments
            .iter()
            .filter(|j| j.evaluator_id == evaluator_id)
            .map(|j| j.triplet_id.as_str())
            .collect();
        self.triplets.iter().enumerate().find(|(_, t)| !done.contains(t.id.as_str()))
    }

    pub fn judged_by(&self, evaluator_id: &str) -> usize {
        self.judgments.iter().filter(|j| j.evaluator_id == evaluator_id).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HtprScore {
    pub score: f64,
    pub ci95: (f64, f64),
    pub judged: usize,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Consistent fraction per evaluator, averaged over evaluators; the interval uses
/// the pooled counts.
pub fn score_judgments(judgments: &[Judgment]) -> Result<HtprScore> {
    if judgments.is_empty() {
        return Err(Error::NoJudgments);
    }
    let mut per: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for j in judgments {
        let e = per.entry(j.evaluator_id.as_str()).or_default();
        e.0 += usize::from(j.consistent);
        e.1 += 1;
    }
    let score = per.values().map(|(k, n)| *k as f64 / *n as f64).sum::<f64>() / per.len() as f64;
    let k: usize = per.values().map(|v| v.0).sum();
    Ok(HtprScore { score, ci95: wilson_interval(k, judgments.len(), 1.96), judged: judgments.len() })
}

pub fn htpr_score(session: &HtprSession) -> Result<HtprScore> {
    score_judgments(&session.judgments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn keys(vals: &[f64]) -> BTreeMap<String, f64> {
        vals.iter().enumerate().map(|(i, v)| (alloc::format!("c{i:02}"), *v)).collect()
    }

    fn sizes(t: &TierAssignment) -> [usize; 3] {
        Tier::ALL.map(|tier| t.members(tier).len())
    }

    #[test]
    fn tier_sizes() {
        let t = assign_tiers(&keys(&[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0])).unwrap();
        assert_eq!(sizes(&t), [3, 3, 3]);
        assert_eq!(t.members(Tier::High), vec!["c00", "c01", "c02"]);
        let t = assign_tiers(&keys(&[1.0; 10])).unwrap();
        assert_eq!(sizes(&t), [4, 3, 3]);
        assert_eq!(t.members(Tier::High), vec!["c00", "c01", "c02", "c03"]);
        assert_eq!(sizes(&assign_tiers(&keys(&[0.0; 11])).unwrap()), [4, 4, 3]);
        assert!(matches!(assign_tiers(&keys(&[1.0, 2.0])), Err(Error::TooFewClips(2))));
    }

    #[test]
    fn sampling_covers_each_clip_once_per_pass() {
        let t = assign_tiers(&keys(&[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0])).unwrap();
        let trips = sample_triplets(&t, 3, 5).unwrap();
        let mut seen: Vec<&str> =
            trips.iter().flat_map(|x| [x.high_clip.as_str(), x.medium_clip.as_str(), x.low_clip.as_str()]).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 9);
        assert_eq!(trips, sample_triplets(&t, 3, 5).unwrap());
        assert_eq!(trips[2].id, "t0002");
    }

    #[test]
    fn replacement_reset_counts() {
        let t = assign_tiers(&keys(&(0..15).map(f64::from).collect::<Vec<_>>())).unwrap();
        let trips = sample_triplets(&t, 100, 9).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for x in &trips {
            for c in [&x.high_clip, &x.medium_clip, &x.low_clip] {
                *counts.entry(c.as_str()).or_default() += 1;
            }
            assert_eq!(t.tiers[&x.high_clip], Tier::High);
            assert_eq!(t.tiers[&x.medium_clip], Tier::Medium);
            assert_eq!(t.tiers[&x.low_clip], Tier::Low);
        }
        assert_eq!(counts.len(), 15);
        assert!(counts.values().all(|&c| c == 20));
    }

    #[test]
    fn wilson_hand_case() {
        let (lo, hi) = wilson_interval(1, 2, 1.96);
        // p = 0.5, n = 2, z^2 = 3.8416: centre 0.5, half = 1.96 sqrt(0.125 + 0.2401) / 2.9208.
        let half = 1.96 * (0.125f64 + 3.8416 / 16.0).sqrt() / (1.0 + 3.8416 / 2.0);
        assert!((lo - (0.5 - half)).abs() < 1e-12 && (hi - (0.5 + half)).abs() < 1e-12);
        assert!((lo - 0.095).abs() < 5e-4 && (hi - 0.905).abs() < 5e-4);
    }

    fn judgment(t: usize, ev: &str, ok: bool) -> Judgment {
        Judgment { triplet_id: triplet_id(t), evaluator_id: ev.into(), consistent: ok, perceived_order: None, timestamp: 0 }
    }

    #[test]
    fn score_examples() {
        let js: Vec<Judgment> = (0..10).map(|i| judgment(i, "e", true)).collect();
        assert_eq!(score_judgments(&js).unwrap().score, 1.0);
        let js: Vec<Judgment> = (0..1000).map(|i| judgment(i, "e", i < 824)).collect();
        assert!((score_judgments(&js).unwrap().score - 0.824).abs() < 1e-12);
        assert!(matches!(score_judgments(&[]), Err(Error::NoJudgments)));
        let mixed = [judgment(0, "a", true), judgment(0, "b", false), judgment(1, "b", false)];
        assert!((score_judgments(&mixed).unwrap().score - 0.5).abs() < 1e-12);
    }

    fn session() -> HtprSession {
        let t = assign_tiers(&keys(&(0..9).map(f64::from).collect::<Vec<_>>())).unwrap();
        HtprSession::create("s", t, 4, 1).unwrap()
    }

    #[test]
    fn session_contract() {
        let mut s = session();
        s.submit(judgment(0, "e", true)).unwrap();
        assert!(matches!(s.submit(judgment(0, "e", false)), Err(Error::DuplicateJudgment { .. })));
        assert!(matches!(s.submit(judgment(9, "e", false)), Err(Error::UnknownTriplet(_))));
        assert_eq!(s.next_for("e").unwrap().0, 1);
        assert_eq!(s.next_for("other").unwrap().0, 0);
        s.submit(judgment(1, "e", true)).unwrap();
        s.submit(judgment(2, "e", false)).unwrap();
        s.submit(judgment(3, "e", true)).unwrap();
        assert!(s.next_for("e").is_none());
        assert!((htpr_score(&s).unwrap().score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perceived_order_must_agree() {
        let mut s = session();
        let tri = s.triplets[0].clone();
        let pos_of = |tier: Tier| Position::ALL[tri.presentation_order.iter().position(|t| *t == tier).unwrap()];
        let right = [pos_of(Tier::High), pos_of(Tier::Medium), pos_of(Tier::Low)];
        let mut j = judgment(0, "e", false);
        j.perceived_order = Some(right);
        assert!(matches!(s.submit(j.clone()), Err(Error::InconsistentJudgment)));
        j.consistent = true;
        s.submit(j).unwrap();
        let mut k = judgment(1, "e", true);
        k.perceived_order = Some([Position::A, Position::A, Position::B]);
        assert!(s.submit(k).is_err());
    }

    #[test]
    fn oracle_judge_scores_one() {
        let t = assign_tiers(&keys(&(0..30).map(f64::from).collect::<Vec<_>>())).unwrap();
        let mut s = HtprSession::create("o", t.clone(), 50, 3).unwrap();
        for i in 0..50 {
            let tri = s.triplets[i].clone();
            let ok = t.ranking_key[&tri.high_clip] > t.ranking_key[&tri.medium_clip]
                && t.ranking_key[&tri.medium_clip] > t.ranking_key[&tri.low_clip];
            s.submit(judgment(i, "e", ok)).unwrap();
        }
        assert_eq!(htpr_score(&s).unwrap().score, 1.0);
    }

    proptest! {
        #[test]
        fn tiers_invariant_under_monotone_transform(vals in proptest::collection::vec(-100.0f64..100.0, 3..40)) {
            let a = assign_tiers(&keys(&vals)).unwrap();
            let mapped: Vec<f64> = vals.iter().map(|v| (v / 10.0).exp() * 3.0 + 1.0).collect();
            let b = assign_tiers(&keys(&mapped)).unwrap();
            prop_assert_eq!(&a.tiers, &b.tiers);
            let s = sizes(&a);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
            let low_high = a.members(Tier::High).iter().map(|c| a.ranking_key[c]).fold(f64::INFINITY, f64::min);
            let top_med = a.members(Tier::Medium).iter().map(|c| a.ranking_key[c]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(low_high >= top_med);
            prop_assert!(a.validate().is_ok());
        }

        #[test]
        fn sampling_reproducible(seed in 0u64..10_000, n in 1usize..60) {
            let t = assign_tiers(&keys(&(0..12).map(f64::from).collect::<Vec<_>>())).unwrap();
            prop_assert_eq!(sample_triplets(&t, n, seed).unwrap(), sample_triplets(&t, n, seed).unwrap());
        }
    }
}
