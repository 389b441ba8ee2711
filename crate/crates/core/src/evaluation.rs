//! Regret against the best policy in hindsight, run aggregation, and the
//! empirical concentration audits of the play-probability estimators.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::RunTrace;
use crate::environments::{AvailabilityModel, LossMatrix};
use crate::error::{Error, Result};
use crate::estimators::{
    empirical_barq, enumerate_barq, exact_barq, mc_barq, product_subset_prob, AvailabilityEstimate,
};
use crate::weights::{accumulate_redistributed, ArmSet, WeightVector, MAX_EXACT_ARMS};

/// The policy `S -> argmin_{i in S} sum_t l_t(i)`: optimal among all maps
/// from awake sets to arms, because the comparator's total loss decomposes
/// over sets. Ties go to the lowest index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HindsightPolicy {
    pub cumulative_losses: Vec<f64>,
}

impl HindsightPolicy {
    pub fn choose(&self, awake: ArmSet) -> usize {
        let mut best: Option<usize> = None;
        for i in awake.iter() {
            if best.is_none_or(|b| self.cumulative_losses[i] < self.cumulative_losses[b]) {
                best = Some(i);
            }
        }
        best.expect("policy queried on an empty set")
    }
}

pub fn best_policy(losses: &LossMatrix) -> HindsightPolicy {
    let mut cumulative_losses = vec![0.0; losses.arms()];
    for row in losses.rows() {
        for (c, l) in cumulative_losses.iter_mut().zip(row) {
            *c += l;
        }
    }
    HindsightPolicy { cumulative_losses }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretTrajectory {
    pub learner_loss: Vec<f64>,
    pub comparator_loss: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrajectory {
    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

/// Per-round and cumulative regret of `trace` against `policy` on the
/// realised awake sets.
pub fn regret_trajectory(trace: &RunTrace, policy: &HindsightPolicy) -> Result<RegretTrajectory> {
    let k = policy.cumulative_losses.len();
    let mut out = RegretTrajectory {
        learner_loss: Vec::with_capacity(trace.rounds.len()),
        comparator_loss: Vec::with_capacity(trace.rounds.len()),
        cumulative: Vec::with_capacity(trace.rounds.len()),
    };
    let mut total = 0.0;
    for r in &trace.rounds {
        if r.losses.len() != k || r.available.width() > k || r.available.is_empty() {
            return Err(Error::LengthMismatch(format!(
                "round {} does not match a {k}-arm policy",
                r.t
            )));
        }
        let learner = r.losses[r.arm];
        let comparator = r.losses[policy.choose(r.available)];
        total += learner - comparator;
        out.learner_loss.push(learner);
        out.comparator_loss.push(comparator);
        out.cumulative.push(total);
    }
    Ok(out)
}

/// Per-round sample mean and standard deviation across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Unbiased (`n - 1`) standard deviation; zero for a single run.
pub fn aggregate(trajectories: &[RegretTrajectory]) -> Result<Aggregate> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidParameter("no trajectories to aggregate".into()))?;
    let len = first.len();
    if trajectories.iter().any(|t| t.len() != len) {
        return Err(Error::LengthMismatch("trajectories differ in length".into()));
    }
    let n = trajectories.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for t in 0..len {
        let m = trajectories.iter().map(|r| r.cumulative[t]).sum::<f64>() / n;
        mean[t] = m;
        if trajectories.len() > 1 {
            let ss: f64 = trajectories.iter().map(|r| (r.cumulative[t] - m).powi(2)).sum();
            std[t] = (ss / (n - 1.0)).sqrt();
        }
    }
    Ok(Aggregate { mean, std })
}

/// True play probabilities `E_S[q^S]` under the generating availability
/// model, by exact enumeration (`q^{empty} = 0`).
pub fn exact_qstar(p: &WeightVector, model: &AvailabilityModel) -> Result<Vec<f64>> {
    if model.arms() != p.len() {
        return Err(Error::LengthMismatch(format!(
            "{} weights, model over {} arms",
            p.len(),
            model.arms()
        )));
    }
    match model {
        AvailabilityModel::Independent(m) => {
            if p.len() > MAX_EXACT_ARMS {
                return Err(Error::EnumerationCap(p.len()));
            }
            let a = m.probabilities();
            Ok(enumerate_barq(p.as_slice(), |s| product_subset_prob(a, s)))
        }
        AvailabilityModel::Subsets(d) => {
            if p.len() > MAX_EXACT_ARMS {
                return Err(Error::EnumerationCap(p.len()));
            }
            let mut acc = vec![0.0; p.len()];
            for (s, prob) in d.support() {
                if !s.is_empty() {
                    accumulate_redistributed(p.as_slice(), s, prob, &mut acc);
                }
            }
            Ok(acc)
        }
        AvailabilityModel::Correlated(_) => Err(Error::InvalidParameter(
            "exact play probabilities need an independent or explicit subset model".into(),
        )),
    }
}

/// Which estimator is audited against its concentration bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lemma {
    /// Exact enumeration over the product of empirical availabilities.
    L1,
    /// Monte-Carlo resampling from the empirical availabilities.
    L6,
    /// Average over the observed subset history.
    L9,
}

impl Lemma {
    /// Deviation bound holding for all arms with probability `1 - delta`
    /// after `t` observed availability sets.
    pub fn bound(self, k: usize, t: usize, delta: f64) -> f64 {
        let k_f = k as f64;
        let t = t as f64;
        match self {
            Lemma::L1 => {
                let log_term = (k_f / delta).ln();
                2.0 * k_f * (2.0 * log_term / t).sqrt() + 8.0 * k_f * log_term / (3.0 * t)
            }
            Lemma::L6 => {
                let log_term = (2.0 * k_f / delta).ln();
                4.0 * k_f * (log_term / t).sqrt() + 8.0 * k_f * log_term / (3.0 * t)
            }
            Lemma::L9 => {
                let subsets = 2f64.powi(k as i32);
                let log_term = (subsets / delta).ln();
                (2.0 * subsets / t * log_term).sqrt() + 2.0 * subsets / (3.0 * t) * log_term
            }
        }
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Lemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Lemma::L1),
            "L6" => Ok(Lemma::L6),
            "L9" => Ok(Lemma::L9),
            _ => Err(Error::InvalidParameter(format!("unknown lemma `{s}` (expected L1, L6 or L9)"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub lemma: Lemma,
    pub model: AvailabilityModel,
    /// Number of observed availability sets per trial.
    pub t: usize,
    pub delta: f64,
    pub trials: usize,
    /// Fixed learner weights; uniform when absent.
    pub weights: Option<WeightVector>,
    /// Monte-Carlo draws for [`Lemma::L6`]; `t` when absent.
    pub mc_samples: Option<usize>,
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.t == 0 {
            return Err(Error::config("t", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must lie in (0, 1)"));
        }
        if self.mc_samples == Some(0) {
            return Err(Error::config("mc_samples", "must be at least 1"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.model.arms() {
                return Err(Error::config("weights", "length differs from the arm count"));
            }
        }
        if matches!(self.lemma, Lemma::L1 | Lemma::L6) && !matches!(self.model, AvailabilityModel::Independent(_)) {
            return Err(Error::config("availability", "L1 and L6 audit independent availabilities"));
        }
        if self.model.arms() > MAX_EXACT_ARMS {
            return Err(Error::EnumerationCap(self.model.arms()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub lemma: Lemma,
    pub arms: usize,
    pub t: usize,
    pub delta: f64,
    pub trials: usize,
    pub bound: f64,
    pub qstar: Vec<f64>,
    /// `max_i |q*(i) - estimate(i)|` of every trial.
    pub max_deviations: Vec<f64>,
    pub violations: usize,
    pub violation_fraction: f64,
    pub passed: bool,
}

impl AuditReport {
    pub fn mean_deviation(&self) -> f64 {
        self.max_deviations.iter().sum::<f64>() / self.max_deviations.len().max(1) as f64
    }

    pub fn largest_deviation(&self) -> f64 {
        self.max_deviations.iter().copied().fold(0.0, f64::max)
    }
}

/// Runs independent trials of `t` raw draws from the model (empty draws
/// included, as in the model), estimates the play probabilities with the
/// lemma's estimator and counts how often the deviation from the true value
/// exceeds the lemma's bound. Passes iff the violation fraction is at most
/// `delta`.
pub fn concentration_audit<R: Rng + ?Sized>(config: &AuditConfig, rng: &mut R) -> Result<AuditReport> {
    config.validate()?;
    let k = config.model.arms();
    let p = config.weights.clone().unwrap_or_else(|| WeightVector::uniform(k));
    let qstar = exact_qstar(&p, &config.model)?;
    let bound = config.lemma.bound(k, config.t, config.delta);
    let mut max_deviations = Vec::with_capacity(config.trials);
    for _ in 0..config.trials {
        let mut est = AvailabilityEstimate::new(k);
        for _ in 0..config.t {
            est.observe(config.model.sample_raw(rng));
        }
        let estimate = match config.lemma {
            Lemma::L1 => exact_barq(&p, &est.ahat())?,
            Lemma::L6 => mc_barq(&p, &est.ahat(), config.mc_samples.unwrap_or(config.t), rng)?,
            Lemma::L9 => empirical_barq(&p, &est)?,
        };
        let dev = qstar
            .iter()
            .zip(&estimate.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        max_deviations.push(dev);
    }
    let violations = max_deviations.iter().filter(|&&d| d > bound).count();
    let violation_fraction = violations as f64 / config.trials as f64;
    Ok(AuditReport {
        lemma: config.lemma,
        arms: k,
        t: config.t,
        delta: config.delta,
        trials: config.trials,
        bound,
        qstar,
        max_deviations,
        violations,
        violation_fraction,
        passed: violation_fraction <= config.delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{run_episode, LearnerOptions, RoundOutcome, Variant};
    use crate::environments::{
        Episode, IndependentAvailability, LossModel, SubsetDistribution,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set(arms: &[usize]) -> ArmSet {
        ArmSet::from_arms(arms.iter().copied())
    }

    fn policy(c: &[f64]) -> HindsightPolicy {
        HindsightPolicy {
            cumulative_losses: c.to_vec(),
        }
    }

    #[test]
    fn awake_argmin() {
        let p = policy(&[5.0, 1.0, 3.0]);
        assert_eq!(p.choose(set(&[0, 2])), 2);
        assert_eq!(p.choose(ArmSet::full(3)), 1);
        assert_eq!(policy(&[0.0]).choose(set(&[0])), 0);
        assert_eq!(policy(&[2.0, 1.0, 1.0]).choose(ArmSet::full(3)), 1);
    }

    #[test]
    fn best_policy_sums_columns() {
        let m = LossMatrix::from_rows(2, vec![vec![0.5, 1.0], vec![0.25, 0.0]]).unwrap();
        assert_eq!(best_policy(&m).cumulative_losses, vec![0.75, 1.0]);
    }

    fn trace_from(losses: &[Vec<f64>], sets: &[ArmSet], arms: &[usize]) -> RunTrace {
        RunTrace {
            variant: Variant::Uniform,
            rounds: losses
                .iter()
                .zip(sets)
                .zip(arms)
                .enumerate()
                .map(|(t, ((l, &s), &arm))| RoundOutcome {
                    t: t as u64 + 1,
                    available: s,
                    arm,
                    learner_loss: l[arm],
                    comparator_loss: 0.0,
                    cumulative_regret: 0.0,
                    losses: l.clone(),
                    distribution: vec![],
                    estimated_loss: vec![],
                    lambda: None,
                    play_probabilities: None,
                })
                .collect(),
        }
    }

    #[test]
    fn playing_the_comparator_has_zero_regret() {
        let losses = vec![vec![0.2, 0.9, 0.4]; 6];
        let m = LossMatrix::from_rows(3, losses.clone()).unwrap();
        let pol = best_policy(&m);
        let sets: Vec<ArmSet> = (1..=6).map(ArmSet::from_bits).collect();
        let arms: Vec<usize> = sets.iter().map(|&s| pol.choose(s)).collect();
        let r = regret_trajectory(&trace_from(&losses, &sets, &arms), &pol).unwrap();
        assert!(r.cumulative.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn worst_arm_regret_grows_linearly() {
        let losses = vec![vec![0.25, 0.75]; 10];
        let m = LossMatrix::from_rows(2, losses.clone()).unwrap();
        let sets = vec![ArmSet::full(2); 10];
        let r = regret_trajectory(&trace_from(&losses, &sets, &[1; 10]), &best_policy(&m)).unwrap();
        for (t, &x) in r.cumulative.iter().enumerate() {
            assert!((x - 0.5 * (t + 1) as f64).abs() < 1e-12);
        }
        assert!(regret_trajectory(&trace_from(&losses, &sets, &[1; 10]), &policy(&[0.0; 3])).is_err());
    }

    #[test]
    fn aggregate_cases() {
        let run = |v: Vec<f64>| RegretTrajectory {
            learner_loss: vec![],
            comparator_loss: vec![],
            cumulative: v,
        };
        let one = aggregate(&[run(vec![1.0, 2.0])]).unwrap();
        assert_eq!(one.mean, vec![1.0, 2.0]);
        assert_eq!(one.std, vec![0.0, 0.0]);
        let two = aggregate(&[run(vec![1.0, -3.0]), run(vec![-1.0, 3.0])]).unwrap();
        assert_eq!(two.mean, vec![0.0, 0.0]);
        assert!((two.std[1] - 18f64.sqrt()).abs() < 1e-12);
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[run(vec![1.0]), run(vec![1.0, 2.0])]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noisy: Vec<_> = (0..50)
            .map(|_| run((0..20).map(|_| rng.random::<f64>()).collect()))
            .collect();
        assert!(aggregate(&noisy).unwrap().std.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn qstar_cases() {
        let ind = |a: Vec<f64>| AvailabilityModel::Independent(IndependentAvailability::new(a).unwrap());
        let p = WeightVector::uniform(2);
        assert_eq!(exact_qstar(&p, &ind(vec![1.0, 1.0])).unwrap(), vec![0.5, 0.5]);
        let q = exact_qstar(&p, &ind(vec![1.0, 0.5])).unwrap();
        assert!((q[0] - 0.75).abs() < 1e-15 && (q[1] - 0.25).abs() < 1e-15);
        let d = SubsetDistribution::new(2, vec![set(&[0]), set(&[1])], vec![0.5, 0.5]).unwrap();
        let p = WeightVector::new(vec![0.9, 0.1]).unwrap();
        assert_eq!(exact_qstar(&p, &AvailabilityModel::Subsets(d)).unwrap(), vec![0.5, 0.5]);
        assert!(exact_qstar(&WeightVector::uniform(3), &ind(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn audit_deviation_shrinks_with_t() {
        let model = AvailabilityModel::Independent(IndependentAvailability::new(vec![0.4, 0.6, 0.8]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for lemma in [Lemma::L1, Lemma::L6, Lemma::L9] {
            let mut run = |t| {
                let cfg = AuditConfig {
                    lemma,
                    model: model.clone(),
                    t,
                    delta: 0.1,
                    trials: 20,
                    weights: None,
                    mc_samples: None,
                };
                concentration_audit(&cfg, &mut rng).unwrap()
            };
            let small = run(50);
            let large = run(20_000);
            assert!(large.mean_deviation() < small.mean_deviation() / 4.0, "{lemma}");
            assert!(large.largest_deviation() < 0.02, "{lemma}");
            assert!(large.passed);
        }
    }

    #[test]
    fn audit_config_errors() {
        let model = AvailabilityModel::Subsets(SubsetDistribution::uniform_nonempty(3).unwrap());
        let mut cfg = AuditConfig {
            lemma: Lemma::L9,
            model,
            t: 10,
            delta: 0.1,
            trials: 0,
            weights: None,
            mc_samples: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(concentration_audit(&cfg, &mut rng), Err(Error::Config { .. })));
        cfg.trials = 5;
        cfg.lemma = Lemma::L1;
        assert!(concentration_audit(&cfg, &mut rng).is_err());
        cfg.lemma = Lemma::L9;
        cfg.delta = 1.0;
        assert!(concentration_audit(&cfg, &mut rng).is_err());
        cfg.delta = 0.999;
        assert!(concentration_audit(&cfg, &mut rng).unwrap().passed);
    }

    #[test]
    fn lemma_bounds_plug_in() {
        // 2*5*sqrt(2 ln 100 / 1000) + 40 ln 100 / 3000
        assert!((Lemma::L1.bound(5, 1000, 0.05) - 1.021107452).abs() < 1e-8);
        // sqrt(32/500 ln 160) + 32/1500 ln 160
        assert!((Lemma::L9.bound(4, 500, 0.1) - 0.678192408).abs() < 1e-8);
        assert_eq!("l6".parse::<Lemma>().unwrap(), Lemma::L6);
    }

    #[test]
    fn regret_matches_trace_bookkeeping() {
        let model = AvailabilityModel::Independent(IndependentAvailability::new(vec![0.5, 0.7, 0.9]).unwrap());
        let ep = Episode::generate(
            &model,
            &LossModel::Markov { p_std: 0.1 },
            400,
            &mut ChaCha8Rng::seed_from_u64(4),
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let trace = run_episode(Variant::Exp3Exact, LearnerOptions::default(), &ep, 400, 6).unwrap();
        let r = regret_trajectory(&trace, &best_policy(&ep.losses)).unwrap();
        for (round, c) in trace.rounds.iter().zip(&r.cumulative) {
            assert!((round.cumulative_regret - c).abs() < 1e-9);
            assert!(c.abs() <= round.t as f64);
        }
    }
}
