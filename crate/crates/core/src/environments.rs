//! Oblivious loss sequences and stochastic availability generators.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::sample_product_subset;
use crate::weights::{sample_index, ArmSet, MAX_ARMS};

/// Consecutive empty draws tolerated before a model is declared pathological.
pub const MAX_CONSECUTIVE_REJECTIONS: u64 = 1_000_000;

/// Each arm awake independently with its own probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependentAvailability {
    a: Vec<f64>,
}

impl IndependentAvailability {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        check_arms(a.len())?;
        if let Some(i) = a.iter().position(|&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::InvalidParameter(format!(
                "availability probability {i} = {} not in (0, 1]",
                a[i]
            )));
        }
        Ok(IndependentAvailability { a })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.a
    }
}

/// Gaussian threshold model: `v ~ N(mean, cov)`, awake set `{i : v_i > 0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatedAvailability {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    cholesky: DMatrix<f64>,
}

impl CorrelatedAvailability {
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let k = mean.len();
        check_arms(k)?;
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::LengthMismatch(format!(
                "{k} means, {}x{} covariance",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        for i in 0..k {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let cholesky = covariance
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(CorrelatedAvailability {
            mean: DVector::from_vec(mean),
            covariance,
            cholesky,
        })
    }

    /// Zero-mean model with the given covariance.
    pub fn centered(covariance: DMatrix<f64>) -> Result<Self> {
        let k = covariance.nrows();
        CorrelatedAvailability::new(vec![0.0; k], covariance)
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.cholesky
    }

    fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmSet {
        let k = self.mean.len();
        let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v = &self.mean + &self.cholesky * z;
        ArmSet::from_arms(v.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i))
    }
}

/// An explicit distribution over awake sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetDistribution {
    arms: usize,
    sets: Vec<ArmSet>,
    probs: Vec<f64>,
}

impl SubsetDistribution {
    pub fn new(arms: usize, sets: Vec<ArmSet>, probs: Vec<f64>) -> Result<Self> {
        check_arms(arms)?;
        if sets.len() != probs.len() || sets.is_empty() {
            return Err(Error::LengthMismatch(format!(
                "{} sets, {} probabilities",
                sets.len(),
                probs.len()
            )));
        }
        if let Some(s) = sets.iter().find(|s| s.width() > arms) {
            return Err(Error::InvalidParameter(format!("set {s} outside {arms} arms")));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("negative subset probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("subset probabilities sum to {total}")));
        }
        Ok(SubsetDistribution { arms, sets, probs })
    }

    /// Uniform over all `2^k - 1` nonempty subsets.
    pub fn uniform_nonempty(arms: usize) -> Result<Self> {
        check_arms(arms)?;
        if arms > crate::weights::MAX_EXACT_ARMS {
            return Err(Error::EnumerationCap(arms));
        }
        let n = (1u64 << arms) - 1;
        let sets = (1..=n).map(ArmSet::from_bits).collect();
        SubsetDistribution::new(arms, sets, vec![1.0 / n as f64; n as usize])
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn support(&self) -> impl Iterator<Item = (ArmSet, f64)> + '_ {
        self.sets.iter().copied().zip(self.probs.iter().copied())
    }

    fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmSet {
        self.sets[sample_index(&self.probs, rng)]
    }
}

/// Any of the supported availability generators.
#[derive(Clone, Debug, PartialEq)]
pub enum AvailabilityModel {
    Independent(IndependentAvailability),
    Correlated(CorrelatedAvailability),
    Subsets(SubsetDistribution),
}

impl AvailabilityModel {
    pub fn arms(&self) -> usize {
        match self {
            AvailabilityModel::Independent(m) => m.a.len(),
            AvailabilityModel::Correlated(m) => m.mean.len(),
            AvailabilityModel::Subsets(m) => m.arms,
        }
    }

    /// One draw from the model, possibly empty.
    pub fn sample_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> ArmSet {
        match self {
            AvailabilityModel::Independent(m) => sample_product_subset(&m.a, rng),
            AvailabilityModel::Correlated(m) => m.sample_raw(rng),
            AvailabilityModel::Subsets(m) => m.sample_raw(rng),
        }
    }

    /// A nonempty awake set, redrawing on empty draws. Returns the set and
    /// the number of rejected draws.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ArmSet, u64)> {
        let mut rejected = 0;
        loop {
            let s = self.sample_raw(rng);
            if !s.is_empty() {
                return Ok((s, rejected));
            }
            rejected += 1;
            if rejected >= MAX_CONSECUTIVE_REJECTIONS {
                return Err(Error::RejectionLimit(rejected));
            }
        }
    }
}

/// Block-diagonal correlation matrix: unit diagonal, `rho` between arms in
/// the same block of `block_size` consecutive arms (the last block may be
/// smaller), zero elsewhere.
pub fn block_covariance(k: usize, block_size: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!("rho = {rho} not in [0, 1)")));
    }
    if block_size == 0 {
        return Err(Error::InvalidParameter("block_size must be positive".into()));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else if i / block_size == j / block_size {
            rho
        } else {
            0.0
        }
    }))
}

/// Oblivious loss generators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossModel {
    /// The best arm rotates every `tau` rounds; Bernoulli losses.
    Switching { tau: u64, mu_best: f64, mu_other: f64 },
    /// Per-arm Gaussian random walk started uniformly in `[0, 1]`, clamped.
    Markov { p_std: f64 },
    /// The same loss vector every round.
    Constant { losses: Vec<f64> },
}

impl LossModel {
    pub fn switching(tau: u64) -> Self {
        LossModel::Switching {
            tau,
            mu_best: 0.2,
            mu_other: 0.8,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            LossModel::Switching {
                tau,
                mu_best,
                mu_other,
            } => {
                if *tau == 0 {
                    return Err(Error::InvalidParameter("tau must be positive".into()));
                }
                if !((0.0..=1.0).contains(mu_best) && (0.0..=1.0).contains(mu_other)) {
                    return Err(Error::InvalidParameter("Bernoulli means must lie in [0, 1]".into()));
                }
                if mu_best >= mu_other {
                    return Err(Error::InvalidParameter("mu_best must be below mu_other".into()));
                }
            }
            LossModel::Markov { p_std } => {
                if !(p_std.is_finite() && *p_std >= 0.0) {
                    return Err(Error::InvalidParameter(format!("p_std = {p_std}")));
                }
            }
            LossModel::Constant { losses } => {
                if losses.len() != k {
                    return Err(Error::LengthMismatch(format!(
                        "{} constant losses for {k} arms",
                        losses.len()
                    )));
                }
                if losses.iter().any(|l| !(0.0..=1.0).contains(l)) {
                    return Err(Error::InvalidParameter("losses must lie in [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

/// A `T x K` matrix of losses in `[0, 1]`, row `t - 1` holding round `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    arms: usize,
    data: Vec<f64>,
}

impl LossMatrix {
    pub fn from_rows(arms: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * arms);
        for (t, row) in rows.into_iter().enumerate() {
            if row.len() != arms {
                return Err(Error::LengthMismatch(format!("row {t} has {} entries", row.len())));
            }
            if row.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::InvalidParameter(format!("row {t}: loss outside [0, 1]")));
            }
            data.extend(row);
        }
        Ok(LossMatrix { arms, data })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn rounds(&self) -> usize {
        self.data.len().checked_div(self.arms).unwrap_or(0)
    }

    /// Losses of round `index + 1`.
    pub fn row(&self, index: usize) -> &[f64] {
        &self.data[index * self.arms..(index + 1) * self.arms]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.arms)
    }
}

/// Generates the whole `T x K` loss sequence up front.
pub fn gen_losses<R: Rng + ?Sized>(model: &LossModel, horizon: usize, k: usize, rng: &mut R) -> Result<LossMatrix> {
    check_arms(k)?;
    model.validate(k)?;
    let mut data = Vec::with_capacity(horizon * k);
    match model {
        LossModel::Switching {
            tau,
            mu_best,
            mu_other,
        } => {
            for t in 0..horizon as u64 {
                let best = ((t / tau) % k as u64) as usize;
                for i in 0..k {
                    let mu = if i == best { *mu_best } else { *mu_other };
                    data.push(if rng.random::<f64>() < mu { 1.0 } else { 0.0 });
                }
            }
        }
        LossModel::Markov { p_std } => {
            let mut state: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
            for t in 0..horizon {
                if t > 0 {
                    for s in state.iter_mut() {
                        let step: f64 = rng.sample(StandardNormal);
                        *s = (*s + p_std * step).clamp(0.0, 1.0);
                    }
                }
                data.extend_from_slice(&state);
            }
        }
        LossModel::Constant { losses } => {
            for _ in 0..horizon {
                data.extend_from_slice(losses);
            }
        }
    }
    Ok(LossMatrix { arms: k, data })
}

/// One realised environment: the oblivious loss matrix and the awake sets
/// of every round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub losses: LossMatrix,
    pub availability: Vec<ArmSet>,
    /// Empty draws rejected while generating `availability`.
    pub empty_redraws: u64,
}

impl Episode {
    /// Draws losses from `loss_rng` and availabilities from `avail_rng`;
    /// the two streams never interact.
    pub fn generate<R1: Rng + ?Sized, R2: Rng + ?Sized>(
        availability: &AvailabilityModel,
        losses: &LossModel,
        horizon: usize,
        loss_rng: &mut R1,
        avail_rng: &mut R2,
    ) -> Result<Episode> {
        let k = availability.arms();
        let losses = gen_losses(losses, horizon, k, loss_rng)?;
        let mut sets = Vec::with_capacity(horizon);
        let mut empty_redraws = 0;
        for _ in 0..horizon {
            let (s, rejected) = availability.sample(avail_rng)?;
            sets.push(s);
            empty_redraws += rejected;
        }
        Ok(Episode {
            losses,
            availability: sets,
            empty_redraws,
        })
    }

    pub fn new(losses: LossMatrix, availability: Vec<ArmSet>) -> Result<Episode> {
        if losses.rounds() != availability.len() {
            return Err(Error::LengthMismatch(format!(
                "{} loss rows, {} availability rows",
                losses.rounds(),
                availability.len()
            )));
        }
        if let Some(t) = availability.iter().position(|s| s.is_empty() || s.width() > losses.arms()) {
            return Err(Error::InvalidParameter(format!("invalid awake set at round {}", t + 1)));
        }
        Ok(Episode {
            losses,
            availability,
            empty_redraws: 0,
        })
    }

    pub fn horizon(&self) -> usize {
        self.availability.len()
    }

    pub fn arms(&self) -> usize {
        self.losses.arms()
    }
}

fn check_arms(k: usize) -> Result<()> {
    if (1..=MAX_ARMS).contains(&k) {
        Ok(())
    } else {
        Err(Error::ArmCount(k))
    }
}

/// Writes `t,arm_0,...,arm_{K-1}` rows with round-trippable floats.
pub fn write_losses_csv<W: Write>(losses: &LossMatrix, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((0..losses.arms()).map(|i| format!("arm_{i}")));
    w.write_record(&header)?;
    for (t, row) in losses.rows().enumerate() {
        let mut record = vec![(t + 1).to_string()];
        record.extend(row.iter().map(|l| l.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_losses_csv<R: Read>(input: R) -> Result<LossMatrix> {
    let mut r = csv::Reader::from_reader(input);
    let arms = r.headers()?.len().saturating_sub(1);
    let mut rows = Vec::new();
    for (index, record) in r.records().enumerate() {
        let record = record?;
        check_round(&record, index)?;
        let row = record
            .iter()
            .skip(1)
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("round {}: {e}", index + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    LossMatrix::from_rows(arms, rows)
}

/// Writes `t,mask` rows, `mask` being the awake-set bit pattern.
pub fn write_availability_csv<W: Write>(sets: &[ArmSet], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["t", "mask"])?;
    for (t, s) in sets.iter().enumerate() {
        w.write_record([(t + 1).to_string(), s.bits().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_availability_csv<R: Read>(input: R) -> Result<Vec<ArmSet>> {
    let mut r = csv::Reader::from_reader(input);
    let mut sets = Vec::new();
    for (index, record) in r.records().enumerate() {
        let record = record?;
        check_round(&record, index)?;
        let bits = record
            .get(1)
            .ok_or_else(|| Error::LengthMismatch(format!("round {} has no mask", index + 1)))?
            .parse::<u64>()
            .map_err(|e| Error::InvalidParameter(format!("round {}: {e}", index + 1)))?;
        sets.push(ArmSet::from_bits(bits));
    }
    Ok(sets)
}

fn check_round(record: &csv::StringRecord, index: usize) -> Result<()> {
    let t = record.get(0).and_then(|f| f.parse::<usize>().ok());
    if t != Some(index + 1) {
        return Err(Error::InvalidParameter(format!(
            "expected round {} in column t, found {:?}",
            index + 1,
            record.get(0)
        )));
    }
    Ok(())
}
