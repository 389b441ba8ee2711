//! Availability estimates and play-probability estimators.
//!
//! Every estimator approximates `q*(i) = E_S[q^S(i)]`, the probability that
//! arm `i` is played at the current round, where `q^S` is the learner's
//! weight vector redistributed on the awake set `S`. The empty set
//! contributes the zero vector, so estimates sum to `1 - P(empty)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{accumulate_redistributed, ArmSet, Rule, WeightVector, MAX_ARMS, MAX_EXACT_ARMS};

/// Per-arm availability counts plus the multiset of observed awake sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityEstimate {
    counts: Vec<u64>,
    rounds: u64,
    history: BTreeMap<ArmSet, u64>,
}

impl AvailabilityEstimate {
    pub fn new(k: usize) -> Self {
        AvailabilityEstimate {
            counts: vec![0; k],
            rounds: 0,
            history: BTreeMap::new(),
        }
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    /// Records one awake set. The empty set is accepted so that raw
    /// product-Bernoulli samples can be counted as drawn.
    pub fn observe(&mut self, awake: ArmSet) {
        debug_assert!(awake.width() <= self.counts.len());
        for i in awake.iter() {
            self.counts[i] += 1;
        }
        self.rounds += 1;
        *self.history.entry(awake).or_insert(0) += 1;
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Distinct observed sets with their multiplicities, in mask order.
    pub fn history(&self) -> &BTreeMap<ArmSet, u64> {
        &self.history
    }

    /// Empirical availability frequencies; all zero before the first round.
    pub fn ahat(&self) -> Vec<f64> {
        if self.rounds == 0 {
            return vec![0.0; self.counts.len()];
        }
        let t = self.rounds as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }
}

/// An estimate of per-arm play probabilities, tagged with its estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayProbabilities {
    pub values: Vec<f64>,
    pub estimator: Rule,
}

impl PlayProbabilities {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Importance-weighted loss estimate: zero except at the played arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedLoss {
    pub values: Vec<f64>,
}

/// Product-Bernoulli probability of exactly the set `awake` being available.
pub fn product_subset_prob(ahat: &[f64], awake: ArmSet) -> f64 {
    ahat.iter()
        .enumerate()
        .map(|(i, &a)| if awake.contains(i) { a } else { 1.0 - a })
        .product()
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.compensation
    }
}

fn check_lengths(p: &WeightVector, ahat: &[f64]) -> Result<()> {
    if p.len() != ahat.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights, {} availabilities",
            p.len(),
            ahat.len()
        )));
    }
    if let Some(i) = ahat.iter().position(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidParameter(format!("availability {i} = {}", ahat[i])));
    }
    Ok(())
}

/// Sum of `P(S) q^S` over every subset `S` of the arms.
///
/// Subsets are visited in increasing mask order; each coordinate is
/// accumulated with compensated summation.
pub(crate) fn enumerate_barq(p: &[f64], subset_prob: impl Fn(ArmSet) -> f64) -> Vec<f64> {
    let k = p.len();
    let mut acc = vec![CompensatedSum::default(); k];
    let mut term = vec![0.0; k];
    for bits in 1u64..(1u64 << k) {
        let awake = ArmSet::from_bits(bits);
        let prob = subset_prob(awake);
        if prob == 0.0 {
            continue;
        }
        for i in awake.iter() {
            term[i] = 0.0;
        }
        accumulate_redistributed(p, awake, prob, &mut term);
        for i in awake.iter() {
            acc[i].add(term[i]);
        }
    }
    acc.into_iter().map(CompensatedSum::value).collect()
}

/// Exact play probabilities under independent availabilities `ahat`,
/// by enumeration of all `2^K` subsets.
pub fn exact_barq(p: &WeightVector, ahat: &[f64]) -> Result<PlayProbabilities> {
    check_lengths(p, ahat)?;
    if p.len() > MAX_EXACT_ARMS {
        return Err(Error::EnumerationCap(p.len()));
    }
    let values = enumerate_barq(p.as_slice(), |s| product_subset_prob(ahat, s));
    Ok(PlayProbabilities {
        values,
        estimator: Rule::Exact,
    })
}

/// Draws one subset with arm `i` present independently with probability `a[i]`.
///
/// Consumes one `f64` per arm. May return the empty set.
pub fn sample_product_subset<R: Rng + ?Sized>(a: &[f64], rng: &mut R) -> ArmSet {
    let mut awake = ArmSet::EMPTY;
    for (i, &ai) in a.iter().enumerate() {
        if rng.random::<f64>() < ai {
            awake.insert(i);
        }
    }
    awake
}

/// Monte-Carlo play probabilities: the average of `q^S` over `n_samples`
/// fresh draws `S ~ P_ahat`. Empty draws contribute zero.
pub fn mc_barq<R: Rng + ?Sized>(
    p: &WeightVector,
    ahat: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<PlayProbabilities> {
    check_lengths(p, ahat)?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    let mut acc = vec![0.0; p.len()];
    for _ in 0..n_samples {
        let awake = sample_product_subset(ahat, rng);
        if !awake.is_empty() {
            accumulate_redistributed(p.as_slice(), awake, 1.0, &mut acc);
        }
    }
    let n = n_samples as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Ok(PlayProbabilities {
        values: acc,
        estimator: Rule::MonteCarlo,
    })
}

/// Play probabilities averaged over the observed subset history, each
/// distinct set weighted by its multiplicity.
pub fn empirical_barq(p: &WeightVector, est: &AvailabilityEstimate) -> Result<PlayProbabilities> {
    if est.rounds() == 0 {
        return Err(Error::EmptyHistory);
    }
    if est.arms() != p.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights, estimate over {} arms",
            p.len(),
            est.arms()
        )));
    }
    let t = est.rounds() as f64;
    let mut acc = vec![0.0; p.len()];
    for (&awake, &count) in est.history() {
        if !awake.is_empty() {
            accumulate_redistributed(p.as_slice(), awake, count as f64 / t, &mut acc);
        }
    }
    Ok(PlayProbabilities {
        values: acc,
        estimator: Rule::General,
    })
}

/// `loss / (q(played) + lambda)` at the played arm, zero elsewhere.
pub fn loss_estimate(
    loss_observed: f64,
    played: usize,
    q: &PlayProbabilities,
    lambda: f64,
) -> Result<EstimatedLoss> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
    }
    if played >= q.values.len() {
        return Err(Error::LengthMismatch(format!(
            "arm {played} of {}",
            q.values.len()
        )));
    }
    if !(0.0..=1.0).contains(&loss_observed) {
        return Err(Error::InvalidParameter(format!("loss = {loss_observed}")));
    }
    let mut values = vec![0.0; q.values.len()];
    values[played] = loss_observed / (q.values[played] + lambda);
    Ok(EstimatedLoss { values })
}

/// Arm count accepted by the non-enumerating estimators.
pub(crate) fn check_arm_count(k: usize) -> Result<()> {
    if (2..=MAX_ARMS).contains(&k) {
        Ok(())
    } else {
        Err(Error::ArmCount(k))
    }
}
