//! Round-based sleeping-bandit learners.
//!
//! Every learner follows the same contract: it is shown the awake set `S_t`,
//! picks an awake arm, is told the loss of that arm only, and updates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::environments::Episode;
use crate::error::{Error, Result};
use crate::estimators::{
    check_arm_count, empirical_barq, exact_barq, loss_estimate, mc_barq, AvailabilityEstimate,
    EstimatedLoss, PlayProbabilities,
};
use crate::evaluation::best_policy;
use crate::seeding::{self, StreamRng};
use crate::weights::{default_params, ArmSet, Rule, ScheduleParams, WeightVector, MAX_EXACT_ARMS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Sleeping-EXP3 with the `2^K`-term play-probability enumeration.
    #[serde(rename = "exp3-exact")]
    Exp3Exact,
    /// Sleeping-EXP3 with Monte-Carlo resampled play probabilities.
    #[serde(rename = "exp3-mc")]
    Exp3Mc,
    /// Sleeping-EXP3G: play probabilities from the observed subset history.
    #[serde(rename = "exp3g")]
    Exp3G,
    /// Uniform over the awake arms.
    #[serde(rename = "uniform")]
    Uniform,
    /// Awake arm with the smallest cumulative observed loss.
    #[serde(rename = "ftl")]
    Ftl,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Exp3Exact,
        Variant::Exp3Mc,
        Variant::Exp3G,
        Variant::Uniform,
        Variant::Ftl,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Exp3Exact => "exp3-exact",
            Variant::Exp3Mc => "exp3-mc",
            Variant::Exp3G => "exp3g",
            Variant::Uniform => "uniform",
            Variant::Ftl => "ftl",
        }
    }

    /// Parameter schedule of the exponential-weights variants.
    pub fn rule(self) -> Option<Rule> {
        match self {
            Variant::Exp3Exact => Some(Rule::Exact),
            Variant::Exp3Mc => Some(Rule::MonteCarlo),
            Variant::Exp3G => Some(Rule::General),
            Variant::Uniform | Variant::Ftl => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm `{s}`")))
    }
}

/// Per-learner knobs that are not part of the theoretical schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerOptions {
    /// Upper bound on the Monte-Carlo sample count (which is `t` at round
    /// `t` otherwise).
    pub mc_max_samples: Option<usize>,
}

/// The arm drawn at one round and the distribution it was drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice {
    pub arm: usize,
    pub distribution: WeightVector,
}

/// What the learner computed while absorbing one observed loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub estimated_loss: EstimatedLoss,
    pub lambda: Option<f64>,
    pub play_probabilities: Option<PlayProbabilities>,
}

/// State of one learner over one run.
#[derive(Clone, Debug)]
pub struct Learner {
    variant: Variant,
    weights: WeightVector,
    availability: AvailabilityEstimate,
    schedule: Option<ScheduleParams>,
    round: u64,
    cumulative_loss: Vec<f64>,
    options: LearnerOptions,
    resample_rng: StreamRng,
}

impl Learner {
    /// Uniform weights, empty availability estimate, default schedule.
    pub fn new(variant: Variant, k: usize, horizon: u64) -> Result<Self> {
        check_arm_count(k)?;
        if variant == Variant::Exp3Exact && k > MAX_EXACT_ARMS {
            return Err(Error::EnumerationCap(k));
        }
        let schedule = variant.rule().map(|rule| default_params(rule, k, horizon)).transpose()?;
        if horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(Learner {
            variant,
            weights: WeightVector::uniform(k),
            availability: AvailabilityEstimate::new(k),
            schedule,
            round: 1,
            cumulative_loss: vec![0.0; k],
            options: LearnerOptions::default(),
            resample_rng: seeding::stream(0, 0, "resample"),
        })
    }

    pub fn with_options(mut self, options: LearnerOptions) -> Self {
        self.options = options;
        self
    }

    /// Seeds the private stream used for Monte-Carlo resampling.
    pub fn with_resample_seed(mut self, seed: u64) -> Self {
        self.resample_rng = seeding::stream(seed, 0, "resample");
        self
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn arms(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn availability(&self) -> &AvailabilityEstimate {
        &self.availability
    }

    pub fn schedule(&self) -> Option<&ScheduleParams> {
        self.schedule.as_ref()
    }

    /// The upcoming round, starting at 1.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn cumulative_loss(&self) -> &[f64] {
        &self.cumulative_loss
    }

    fn check_awake(&self, awake: ArmSet) -> Result<()> {
        if awake.is_empty() {
            return Err(Error::EmptyAvailability);
        }
        if awake.width() > self.arms() {
            return Err(Error::LengthMismatch(format!("set {awake} outside {} arms", self.arms())));
        }
        Ok(())
    }

    /// The distribution over awake arms this learner plays from.
    pub fn play_distribution(&self, awake: ArmSet) -> Result<WeightVector> {
        self.check_awake(awake)?;
        match self.variant {
            Variant::Exp3Exact | Variant::Exp3Mc | Variant::Exp3G => self.weights.redistribute(awake),
            Variant::Uniform => WeightVector::uniform(self.arms()).redistribute(awake),
            Variant::Ftl => {
                // first minimum wins, i.e. the lowest index on ties
                let mut best = None;
                for i in awake.iter() {
                    if best.is_none_or(|b: usize| self.cumulative_loss[i] < self.cumulative_loss[b]) {
                        best = Some(i);
                    }
                }
                let mut point = vec![0.0; self.arms()];
                point[best.expect("nonempty")] = 1.0;
                WeightVector::new(point)
            }
        }
    }

    /// Draws the arm to play. Uses one `f64` from `rng` for the randomised
    /// variants and none for FTL.
    pub fn choose<R: rand::Rng + ?Sized>(&self, awake: ArmSet, rng: &mut R) -> Result<Choice> {
        let distribution = self.play_distribution(awake)?;
        let arm = match self.variant {
            Variant::Ftl => distribution.as_slice().iter().position(|&w| w == 1.0).expect("point mass"),
            _ => distribution.sample(rng),
        };
        Ok(Choice { arm, distribution })
    }

    /// Absorbs the loss of the played arm and advances to the next round.
    pub fn update(&mut self, awake: ArmSet, played: usize, loss: f64) -> Result<Update> {
        self.check_awake(awake)?;
        if !awake.contains(played) {
            return Err(Error::ArmNotAvailable(played));
        }
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::InvalidParameter(format!("loss {loss} outside [0, 1]")));
        }
        let k = self.arms();
        let update = match (self.variant, self.schedule) {
            (Variant::Uniform, _) => Update {
                estimated_loss: EstimatedLoss { values: vec![0.0; k] },
                lambda: None,
                play_probabilities: None,
            },
            (Variant::Ftl, _) => {
                self.cumulative_loss[played] += loss;
                let mut values = vec![0.0; k];
                values[played] = loss;
                Update {
                    estimated_loss: EstimatedLoss { values },
                    lambda: None,
                    play_probabilities: None,
                }
            }
            (variant, Some(schedule)) => {
                // the estimate at round t includes S_t itself
                self.availability.observe(awake);
                let q = match variant {
                    Variant::Exp3Exact => exact_barq(&self.weights, &self.availability.ahat())?,
                    Variant::Exp3Mc => {
                        let t = self.round as usize;
                        let n = self.options.mc_max_samples.map_or(t, |cap| t.min(cap.max(1)));
                        mc_barq(&self.weights, &self.availability.ahat(), n, &mut self.resample_rng)?
                    }
                    _ => empirical_barq(&self.weights, &self.availability)?,
                };
                let lambda = schedule.lambda(self.round);
                let estimated_loss = loss_estimate(loss, played, &q, lambda)?;
                self.weights = self.weights.exp3_update(&estimated_loss.values, schedule.eta)?;
                self.cumulative_loss[played] += estimated_loss.values[played];
                Update {
                    estimated_loss,
                    lambda: Some(lambda),
                    play_probabilities: Some(q),
                }
            }
            (_, None) => unreachable!("exponential-weights variants always carry a schedule"),
        };
        self.round += 1;
        Ok(update)
    }
}

/// Everything recorded about one round of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub t: u64,
    pub available: ArmSet,
    pub arm: usize,
    pub learner_loss: f64,
    /// Loss of the hindsight-optimal policy on `available`.
    pub comparator_loss: f64,
    pub cumulative_regret: f64,
    /// Full loss vector of the round; the learner only saw `losses[arm]`.
    pub losses: Vec<f64>,
    /// Distribution over arms that `arm` was drawn from.
    pub distribution: Vec<f64>,
    pub estimated_loss: Vec<f64>,
    pub lambda: Option<f64>,
    pub play_probabilities: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub variant: Variant,
    pub rounds: Vec<RoundOutcome>,
}

impl RunTrace {
    pub fn final_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cumulative_regret)
    }
}

/// Plays `horizon` rounds of `episode`. The learner's arm draws and its
/// Monte-Carlo resampling use two streams derived from `seed`.
pub fn run_episode(
    variant: Variant,
    options: LearnerOptions,
    episode: &Episode,
    horizon: usize,
    seed: u64,
) -> Result<RunTrace> {
    if episode.horizon() < horizon {
        return Err(Error::LengthMismatch(format!(
            "episode has {} rounds, {horizon} requested",
            episode.horizon()
        )));
    }
    let mut rounds = Vec::with_capacity(horizon);
    if horizon == 0 {
        return Ok(RunTrace { variant, rounds });
    }
    let k = episode.arms();
    let mut learner = Learner::new(variant, k, horizon as u64)?
        .with_options(options)
        .with_resample_seed(seeding::derive_seed(seed, 0, "resample"));
    let mut rng = seeding::stream(seed, 0, "choose");
    let policy = best_policy(&episode.losses);
    let mut regret = 0.0;
    for index in 0..horizon {
        let awake = episode.availability[index];
        let losses = episode.losses.row(index);
        let choice = learner.choose(awake, &mut rng)?;
        let learner_loss = losses[choice.arm];
        let update = learner.update(awake, choice.arm, learner_loss)?;
        let comparator_loss = losses[policy.choose(awake)];
        regret += learner_loss - comparator_loss;
        rounds.push(RoundOutcome {
            t: index as u64 + 1,
            available: awake,
            arm: choice.arm,
            learner_loss,
            comparator_loss,
            cumulative_regret: regret,
            losses: losses.to_vec(),
            distribution: choice.distribution.into_inner(),
            estimated_loss: update.estimated_loss.values,
            lambda: update.lambda,
            play_probabilities: update.play_probabilities.map(|q| q.values),
        });
    }
    Ok(RunTrace { variant, rounds })
}
