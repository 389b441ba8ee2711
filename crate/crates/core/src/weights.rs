//! Probability-vector primitives shared by every learner.
//!
//! Arms are indexed from 0. An awake set is a bit pattern over at most
//! [`MAX_ARMS`] arms; exact enumeration over all subsets is further limited
//! to [`MAX_EXACT_ARMS`] arms.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widest supported arm set (one bit per arm in a `u64`, top bit unused).
pub const MAX_ARMS: usize = 63;

/// Largest arm count for which the `2^K`-term enumeration is allowed.
pub const MAX_EXACT_ARMS: usize = 20;

/// Tolerance on `sum(p) == 1`.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A subset of arms, stored as a bit pattern (bit `i` set iff arm `i` is awake).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmSet(u64);

impl ArmSet {
    pub const EMPTY: ArmSet = ArmSet(0);

    pub fn from_bits(bits: u64) -> Self {
        ArmSet(bits)
    }

    /// All arms `0..k`.
    pub fn full(k: usize) -> Self {
        debug_assert!(k <= MAX_ARMS);
        if k == 0 {
            ArmSet(0)
        } else {
            ArmSet(u64::MAX >> (64 - k))
        }
    }

    pub fn from_arms<I: IntoIterator<Item = usize>>(arms: I) -> Self {
        let mut bits = 0u64;
        for i in arms {
            debug_assert!(i < MAX_ARMS);
            bits |= 1 << i;
        }
        ArmSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, arm: usize) -> bool {
        arm < 64 && self.0 >> arm & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn insert(&mut self, arm: usize) {
        self.0 |= 1 << arm;
    }

    /// Awake arms in increasing index order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Highest arm index plus one (0 for the empty set).
    pub fn width(self) -> usize {
        64 - self.0.leading_zeros() as usize
    }
}

impl fmt::Debug for ArmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for ArmSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A point on the probability simplex over `K` arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Validates length, sign and normalisation.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no arms".into()));
        }
        if weights.len() > MAX_ARMS {
            return Err(Error::ArmCount(weights.len()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(format!("entry {i} = {}", weights[i])));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidWeights(format!("entries sum to {total}")));
        }
        Ok(WeightVector(weights))
    }

    /// Normalises a nonnegative vector with positive mass.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidWeights(format!("total mass {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        WeightVector::new(weights)
    }

    pub fn uniform(k: usize) -> Self {
        WeightVector(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Mass of `p` restricted to `awake` and renormalised.
    ///
    /// If the awake arms carry no mass at all (only reachable through
    /// underflow) the result is uniform over `awake`.
    pub fn redistribute(&self, awake: ArmSet) -> Result<WeightVector> {
        if awake.is_empty() {
            return Err(Error::EmptyAvailability);
        }
        if awake.width() > self.len() {
            return Err(Error::LengthMismatch(format!(
                "set {awake} outside {} arms",
                self.len()
            )));
        }
        let mut out = vec![0.0; self.len()];
        accumulate_redistributed(&self.0, awake, 1.0, &mut out);
        Ok(WeightVector(out))
    }

    /// One exponential-weights step `p(i) exp(-eta * lhat(i))`, renormalised.
    ///
    /// Evaluated as a softmax over `ln p(i) - eta * lhat(i)` after
    /// subtracting the maximum, so large cumulative losses cannot overflow.
    pub fn exp3_update(&self, lhat: &[f64], eta: f64) -> Result<WeightVector> {
        if lhat.len() != self.len() {
            return Err(Error::LengthMismatch(format!(
                "{} estimated losses for {} arms",
                lhat.len(),
                self.len()
            )));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!("eta = {eta}")));
        }
        if let Some(i) = lhat.iter().position(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidLoss(i));
        }
        let logits: Vec<f64> = self
            .0
            .iter()
            .zip(lhat)
            .map(|(&p, &l)| if p > 0.0 { p.ln() - eta * l } else { f64::NEG_INFINITY })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|w| *w /= total);
        Ok(WeightVector(out))
    }

    /// Draws an arm with probability equal to its weight.
    ///
    /// Consumes exactly one `f64` from `rng`. Zero-weight arms are never
    /// returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.0, rng)
    }
}

/// Inverse-CDF draw from a nonnegative vector with positive mass.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in probs.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // rounding left u at the very top of the range
    last_positive
}

/// Adds `scale * q^S` to `acc`, where `q^S` is `p` redistributed on `awake`.
pub(crate) fn accumulate_redistributed(p: &[f64], awake: ArmSet, scale: f64, acc: &mut [f64]) {
    let mass: f64 = awake.iter().map(|j| p[j]).sum();
    if mass > 0.0 {
        let factor = scale / mass;
        for i in awake.iter() {
            acc[i] += factor * p[i];
        }
    } else {
        let share = scale / awake.len() as f64;
        for i in awake.iter() {
            acc[i] += share;
        }
    }
}

/// Which concentration lemma tunes the learner: exact enumeration,
/// Monte-Carlo resampling, or the empirical subset history.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Exact,
    MonteCarlo,
    General,
}

impl Rule {
    /// `delta` prescribed for horizon `T`, before clipping.
    fn raw_delta(self, k: usize, horizon: u64) -> f64 {
        let t2 = (horizon as f64).powi(2);
        match self {
            Rule::Exact => k as f64 / t2,
            Rule::MonteCarlo => 2.0 * k as f64 / t2,
            Rule::General => 2f64.powi(k as i32) / t2,
        }
    }
}

/// Largest `delta` handed out by [`default_params`]; the prescribed
/// `K/T^2`-type values exceed 1 on very short horizons.
pub const MAX_DELTA: f64 = 0.5;

/// Scale parameter `lambda_t`, clipped to at most 1.
///
/// `t` is the 1-based round index. All logarithms are natural.
pub fn lambda_schedule(rule: Rule, t: u64, k: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    let k_f = k as f64;
    let value = match rule {
        Rule::Exact => {
            let log_term = (k_f / delta).ln();
            2.0 * k_f * (2.0 * log_term / t).sqrt() + 8.0 * k_f * log_term / (3.0 * t)
        }
        Rule::MonteCarlo => {
            let log_term = (2.0 * k_f / delta).ln();
            4.0 * k_f * (log_term / t).sqrt() + 8.0 * k_f * log_term / (3.0 * t)
        }
        Rule::General => {
            let subsets = 2f64.powi(k as i32);
            let log_term = (subsets / delta).ln();
            (2.0 * subsets / t * log_term).sqrt() + 2.0 * subsets * log_term / (3.0 * t)
        }
    };
    value.min(1.0)
}

/// Learning rate, confidence level and `lambda_t` rule for one learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub horizon: u64,
    pub arms: usize,
    pub eta: f64,
    pub delta: f64,
    pub rule: Rule,
}

impl ScheduleParams {
    pub fn lambda(&self, t: u64) -> f64 {
        lambda_schedule(self.rule, t, self.arms, self.delta)
    }
}

/// `eta = sqrt(ln K / (K T))` and the rule's `delta` (`K/T^2`, `2K/T^2`
/// or `2^K/T^2`), with `delta` capped at [`MAX_DELTA`].
pub fn default_params(rule: Rule, k: usize, horizon: u64) -> Result<ScheduleParams> {
    if !(2..=MAX_ARMS).contains(&k) {
        return Err(Error::ArmCount(k));
    }
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let k_f = k as f64;
    let eta = (k_f.ln() / (k_f * horizon as f64)).sqrt();
    let delta = rule.raw_delta(k, horizon).min(MAX_DELTA);
    Ok(ScheduleParams {
        horizon,
        arms: k,
        eta,
        delta,
        rule,
    })
}
