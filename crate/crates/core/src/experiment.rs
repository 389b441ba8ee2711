//! Config-driven experiments: paired seeded runs, CSV trajectories,
//! metadata sidecars, sweeps, audits and environment dumps.
//!
//! Seeding: run `r` of an experiment draws its loss matrix from stream
//! `(master_seed, r, "losses")` and its awake sets from
//! `(master_seed, r, "availability")`, so every algorithm faces the same
//! environment. The learner labelled `name` uses `(master_seed, r,
//! "learner/name")`. Experiment-level random parameters (per-arm
//! availabilities drawn from a range) come from `(master_seed, 0,
//! "parameters")`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{run_episode, LearnerOptions, Variant};
use crate::environments::{
    block_covariance, write_availability_csv, write_losses_csv, AvailabilityModel, CorrelatedAvailability,
    Episode, IndependentAvailability, LossModel, SubsetDistribution,
};
use crate::error::{Error, Result};
use crate::evaluation::{concentration_audit, AuditConfig, AuditReport, Lemma};
use crate::format::sig6;
use crate::seeding;
use crate::weights::{ArmSet, WeightVector, MAX_ARMS, MAX_EXACT_ARMS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub variant: Variant,
    /// Name used in the CSV and for seeding; defaults to the variant name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_max_samples: Option<usize>,
}

impl AlgorithmConfig {
    pub fn new(variant: Variant) -> Self {
        AlgorithmConfig {
            variant,
            label: None,
            mc_max_samples: None,
        }
    }

    pub fn label(&self) -> &str {
        self.label.as_deref().unwrap_or(self.variant.name())
    }

    fn options(&self) -> LearnerOptions {
        LearnerOptions {
            mc_max_samples: self.mc_max_samples,
        }
    }
}

/// Availability section of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AvailabilityConfig {
    /// Exactly one of `probabilities`, `value` (same for every arm) or
    /// `range` (drawn uniformly once per experiment).
    Independent {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probabilities: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[f64; 2]>,
    },
    /// Zero-mean Gaussian threshold model with a block correlation matrix.
    Correlated { block_size: usize, rho: f64 },
    /// Explicit subsets given as bit masks; uniform over all nonempty
    /// subsets when `sets` is absent.
    Subsets {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sets: Option<Vec<u64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        probs: Option<Vec<f64>>,
    },
}

impl AvailabilityConfig {
    pub fn uniform_range(low: f64, high: f64) -> Self {
        AvailabilityConfig::Independent {
            probabilities: None,
            value: None,
            range: Some([low, high]),
        }
    }

    /// Builds the model; random parameters come from `seed`'s parameter stream.
    pub fn build(&self, arms: usize, seed: u64) -> Result<AvailabilityModel> {
        let wrap = |e: Error| Error::config("availability", e.to_string());
        match self {
            AvailabilityConfig::Independent {
                probabilities,
                value,
                range,
            } => {
                let a = match (probabilities, value, range) {
                    (Some(p), None, None) => {
                        if p.len() != arms {
                            return Err(Error::config(
                                "availability.probabilities",
                                format!("{} entries for {arms} arms", p.len()),
                            ));
                        }
                        p.clone()
                    }
                    (None, Some(v), None) => vec![*v; arms],
                    (None, None, Some([low, high])) => {
                        if !(0.0 < *low && low < high && *high <= 1.0) {
                            return Err(Error::config(
                                "availability.range",
                                "need 0 < low < high <= 1",
                            ));
                        }
                        let mut rng = seeding::stream(seed, 0, seeding::PARAMETERS);
                        (0..arms).map(|_| rng.random_range(*low..*high)).collect()
                    }
                    _ => {
                        return Err(Error::config(
                            "availability",
                            "give exactly one of probabilities, value, range",
                        ))
                    }
                };
                Ok(AvailabilityModel::Independent(IndependentAvailability::new(a).map_err(wrap)?))
            }
            AvailabilityConfig::Correlated { block_size, rho } => {
                let cov = block_covariance(arms, *block_size, *rho).map_err(wrap)?;
                Ok(AvailabilityModel::Correlated(CorrelatedAvailability::centered(cov).map_err(wrap)?))
            }
            AvailabilityConfig::Subsets { sets, probs } => {
                let dist = match (sets, probs) {
                    (None, None) => SubsetDistribution::uniform_nonempty(arms),
                    (Some(sets), Some(probs)) => SubsetDistribution::new(
                        arms,
                        sets.iter().copied().map(ArmSet::from_bits).collect(),
                        probs.clone(),
                    ),
                    _ => {
                        return Err(Error::config(
                            "availability",
                            "sets and probs must be given together",
                        ))
                    }
                };
                Ok(AvailabilityModel::Subsets(dist.map_err(wrap)?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub arms: usize,
    pub horizon: usize,
    pub runs: usize,
    pub master_seed: u64,
    pub algorithms: Vec<AlgorithmConfig>,
    pub availability: AvailabilityConfig,
    pub losses: LossModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(span_path(&e), e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        ExperimentConfig::from_toml(&fs::read_to_string(path)?)
    }

    /// Canonical serialisation, also the input of the config hash.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    /// Checks every field and builds the environment models.
    pub fn validate(&self) -> Result<(AvailabilityModel, LossModel)> {
        if self.id.is_empty() || self.id.contains(['/', '\\', ',', '\n']) {
            return Err(Error::config("id", "must be a nonempty file-name-safe string"));
        }
        if !(2..=MAX_ARMS).contains(&self.arms) {
            return Err(Error::config("arms", format!("must lie in 2..={MAX_ARMS}")));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::config("runs", "must be at least 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "at least one algorithm is required"));
        }
        let mut labels = std::collections::BTreeSet::new();
        for (i, alg) in self.algorithms.iter().enumerate() {
            if !labels.insert(alg.label()) {
                return Err(Error::config(
                    format!("algorithms[{i}].label"),
                    format!("duplicate label `{}`", alg.label()),
                ));
            }
            if alg.label().is_empty() || alg.label().contains([',', '"', '\n']) {
                return Err(Error::config(format!("algorithms[{i}].label"), "not CSV-safe"));
            }
            if alg.variant == Variant::Exp3Exact && self.arms > MAX_EXACT_ARMS {
                return Err(Error::EnumerationCap(self.arms));
            }
            if alg.mc_max_samples == Some(0) {
                return Err(Error::config(format!("algorithms[{i}].mc_max_samples"), "must be at least 1"));
            }
        }
        let availability = self.availability.build(self.arms, self.master_seed)?;
        self.losses
            .validate(self.arms)
            .map_err(|e| Error::config("losses", e.to_string()))?;
        Ok((availability, self.losses.clone()))
    }
}

fn span_path(e: &toml::de::Error) -> String {
    // toml reports positions, not key paths; keep the first line of its
    // rendered message, which names the offending key or table
    e.to_string()
        .lines()
        .next()
        .unwrap_or("config")
        .trim_start_matches("TOML parse error at ")
        .to_string()
}

/// One CSV data row.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub algorithm: String,
    pub run: usize,
    pub t: u64,
    pub cumulative_regret: f64,
    pub learner_loss: f64,
    pub comparator_loss: f64,
}

pub const RESULT_HEADER: [&str; 7] = [
    "experiment",
    "algorithm",
    "run",
    "t",
    "cumulative_regret",
    "learner_loss",
    "comparator_loss",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<ResultRow>,
    /// `final_regrets[a][r]`: final cumulative regret of algorithm `a`
    /// (config order) in run `r`.
    pub final_regrets: Vec<Vec<f64>>,
    /// `mean_regret[a][t - 1]`: run-averaged cumulative regret.
    pub mean_regret: Vec<Vec<f64>>,
    pub empty_redraws: Vec<u64>,
    pub metadata: BTreeMap<String, String>,
}

impl ExperimentResult {
    pub fn algorithm_index(&self, label: &str) -> Option<usize> {
        self.config.algorithms.iter().position(|a| a.label() == label)
    }

    pub fn mean_final_regret(&self, label: &str) -> Option<f64> {
        let runs = &self.final_regrets[self.algorithm_index(label)?];
        Some(runs.iter().sum::<f64>() / runs.len() as f64)
    }

    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer(Vec::new());
        w.write_record(RESULT_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.as_str(),
                r.algorithm.as_str(),
                &r.run.to_string(),
                &r.t.to_string(),
                &sig6(r.cumulative_regret),
                &sig6(r.learner_loss),
                &sig6(r.comparator_loss),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn metadata_text(&self) -> String {
        render_metadata(&self.metadata)
    }

    /// Writes `<id>.csv` and `<id>.meta` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.config.id));
        let meta_path = dir.join(format!("{}.meta", self.config.id));
        fs::write(&csv_path, self.csv_bytes()?)?;
        fs::write(&meta_path, self.metadata_text())?;
        Ok((csv_path, meta_path))
    }
}

fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn render_metadata(map: &BTreeMap<String, String>) -> String {
    map.iter().fold(String::new(), |mut s, (k, v)| {
        let _ = writeln!(s, "{k}={v}");
        s
    })
}

fn join_sig6(values: &[f64]) -> String {
    values.iter().map(|&v| sig6(v)).collect::<Vec<_>>().join(",")
}

fn with_pool<T: Send>(parallel: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match parallel {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

struct RunOutput {
    run: usize,
    empty_redraws: u64,
    // (cumulative regret, learner loss, comparator loss) per algorithm per round
    traces: Vec<Vec<(f64, f64, f64)>>,
}

fn run_one(config: &ExperimentConfig, availability: &AvailabilityModel, losses: &LossModel, run: usize) -> Result<RunOutput> {
    let seed = config.master_seed;
    let r = run as u64;
    let episode = Episode::generate(
        availability,
        losses,
        config.horizon,
        &mut seeding::stream(seed, r, seeding::LOSSES),
        &mut seeding::stream(seed, r, seeding::AVAILABILITY),
    )?;
    let mut traces = Vec::with_capacity(config.algorithms.len());
    for alg in &config.algorithms {
        let learner_seed = seeding::derive_seed(seed, r, &seeding::learner_label(alg.label()));
        let trace = run_episode(alg.variant, alg.options(), &episode, config.horizon, learner_seed)?;
        traces.push(
            trace
                .rounds
                .into_iter()
                .map(|o| (o.cumulative_regret, o.learner_loss, o.comparator_loss))
                .collect(),
        );
    }
    Ok(RunOutput {
        run,
        empty_redraws: episode.empty_redraws,
        traces,
    })
}

/// Runs every algorithm on every run. `parallel` sets the worker count
/// (rayon's default pool when `None`); results do not depend on it.
pub fn run_experiment(config: &ExperimentConfig, parallel: Option<usize>) -> Result<ExperimentResult> {
    let (availability, losses) = config.validate()?;
    let outputs: Vec<RunOutput> = with_pool(parallel, || {
        (0..config.runs)
            .into_par_iter()
            .map(|run| run_one(config, &availability, &losses, run))
            .collect::<Result<Vec<_>>>()
    })??;

    let n_alg = config.algorithms.len();
    let mut rows = Vec::with_capacity(n_alg * config.runs * config.horizon);
    let mut final_regrets = vec![vec![0.0; config.runs]; n_alg];
    let mut mean_regret = vec![vec![0.0; config.horizon]; n_alg];
    for (a, alg) in config.algorithms.iter().enumerate() {
        for out in &outputs {
            let trace = &out.traces[a];
            for (i, &(regret, learner, comparator)) in trace.iter().enumerate() {
                mean_regret[a][i] += regret / config.runs as f64;
                rows.push(ResultRow {
                    experiment: config.id.clone(),
                    algorithm: alg.label().to_string(),
                    run: out.run,
                    t: i as u64 + 1,
                    cumulative_regret: regret,
                    learner_loss: learner,
                    comparator_loss: comparator,
                });
            }
            final_regrets[a][out.run] = trace.last().map_or(0.0, |x| x.0);
        }
    }
    let empty_redraws: Vec<u64> = outputs.iter().map(|o| o.empty_redraws).collect();

    let mut meta = BTreeMap::new();
    meta.insert("experiment".into(), config.id.clone());
    meta.insert("library_version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("config_hash".into(), config.hash());
    meta.insert("master_seed".into(), config.master_seed.to_string());
    meta.insert("arms".into(), config.arms.to_string());
    meta.insert("horizon".into(), config.horizon.to_string());
    meta.insert("runs".into(), config.runs.to_string());
    meta.insert("seed_scheme".into(), "chacha8(splitmix64(master)^splitmix64(run^fnv1a64(label)))".into());
    meta.insert(
        "algorithms".into(),
        config.algorithms.iter().map(|a| a.label()).collect::<Vec<_>>().join(","),
    );
    if let AvailabilityModel::Independent(m) = &availability {
        meta.insert("availability_probabilities".into(), join_sig6(m.probabilities()));
    }
    meta.insert("empty_set_redraws".into(), empty_redraws.iter().sum::<u64>().to_string());
    meta.insert(
        "empty_set_redraws_per_run".into(),
        empty_redraws.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
    );
    for (a, alg) in config.algorithms.iter().enumerate() {
        let label = alg.label();
        if alg.variant == Variant::Exp3Mc {
            meta.insert(
                format!("mc_max_samples.{label}"),
                alg.mc_max_samples.map_or("unlimited".into(), |n| n.to_string()),
            );
        }
        let finals = &final_regrets[a];
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        meta.insert(format!("final_regret_mean.{label}"), sig6(mean));
        if finals.len() > 1 {
            let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (finals.len() - 1) as f64;
            meta.insert(format!("final_regret_std.{label}"), sig6(var.sqrt()));
        }
    }

    Ok(ExperimentResult {
        config: config.clone(),
        rows,
        final_regrets,
        mean_regret,
        empty_redraws,
        metadata: meta,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Arms,
    Availability,
    Horizon,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Arms => "K",
            SweepAxis::Availability => "availability",
            SweepAxis::Horizon => "T",
        }
    }

    /// Config for one axis value.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut config = base.clone();
        match self {
            SweepAxis::Arms | SweepAxis::Horizon => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config("sweep.values", format!("{value} is not a positive integer")));
                }
                if self == SweepAxis::Arms {
                    config.arms = value as usize;
                } else {
                    config.horizon = value as usize;
                }
            }
            SweepAxis::Availability => {
                config.availability = AvailabilityConfig::Independent {
                    probabilities: None,
                    value: Some(value),
                    range: None,
                };
            }
        }
        config.id = format!("{}_{}{}", base.id, self.name(), value);
        Ok(config)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "arms" => Ok(SweepAxis::Arms),
            "availability" | "a" => Ok(SweepAxis::Availability),
            "T" | "t" | "horizon" => Ok(SweepAxis::Horizon),
            _ => Err(Error::config("axis", format!("unknown sweep axis `{s}` (K, availability, T)"))),
        }
    }
}

/// Outcome of one sweep point.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: Result<ExperimentResult>,
}

#[derive(Debug)]
pub struct SweepResult {
    pub base_id: String,
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
}

pub const SWEEP_HEADER: [&str; 7] = ["experiment", "axis", "value", "algorithm", "run", "final_regret", "status"];

impl SweepResult {
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv_writer(Vec::new());
        w.write_record(SWEEP_HEADER)?;
        for point in &self.points {
            let value = point.value.to_string();
            match &point.outcome {
                Ok(res) => {
                    for (a, alg) in res.config.algorithms.iter().enumerate() {
                        for (run, r) in res.final_regrets[a].iter().enumerate() {
                            w.write_record([
                                res.config.id.as_str(),
                                self.axis.name(),
                                &value,
                                alg.label(),
                                &run.to_string(),
                                &sig6(*r),
                                "ok",
                            ])?;
                        }
                    }
                }
                Err(e) => {
                    let id = format!("{}_{}{}", self.base_id, self.axis.name(), value);
                    let status = format!("error: {}: {}", e.kind(), e);
                    w.write_record([id.as_str(), self.axis.name(), &value, "", "", "", &status])?;
                }
            }
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}_sweep_{}.csv", self.base_id, self.axis.name()));
        fs::write(&path, self.csv_bytes()?)?;
        Ok(path)
    }
}

/// Re-runs the experiment at every axis value. A failing point is recorded
/// and does not stop the others.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64], parallel: Option<usize>) -> Result<SweepResult> {
    if values.is_empty() {
        return Err(Error::config("sweep.values", "at least one value is required"));
    }
    let points = values
        .iter()
        .map(|&value| SweepPoint {
            value,
            outcome: axis.apply(base, value).and_then(|c| run_experiment(&c, parallel)),
        })
        .collect();
    Ok(SweepResult {
        base_id: base.id.clone(),
        axis,
        points,
    })
}

/// Audit section of a config file; every field has a per-lemma default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditFile {
    pub lemma: Option<String>,
    pub arms: Option<usize>,
    pub t: Option<usize>,
    pub delta: Option<f64>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub weights: Option<Vec<f64>>,
    pub mc_samples: Option<usize>,
    pub availability: Option<AvailabilityConfig>,
}

impl AuditFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(span_path(&e), e.message().to_string()))
    }

    /// Resolves defaults: L1 and L6 use five arms with availabilities drawn
    /// from U[0.3, 0.9], t = 1000, delta = 0.05 and 1000 trials; L9 uses
    /// four arms uniform over the 15 nonempty subsets, t = 500, delta = 0.1
    /// and 500 trials.
    pub fn resolve(&self, lemma: Option<Lemma>, seed: Option<u64>) -> Result<(AuditConfig, u64)> {
        let lemma = match (lemma, &self.lemma) {
            (Some(l), _) => l,
            (None, Some(s)) => s.parse().map_err(|e: Error| Error::config("lemma", e.to_string()))?,
            (None, None) => return Err(Error::config("lemma", "no lemma given")),
        };
        let seed = seed.or(self.seed).unwrap_or(0);
        let (arms, t, delta, trials, availability) = match lemma {
            Lemma::L1 | Lemma::L6 => (5, 1000, 0.05, 1000, AvailabilityConfig::uniform_range(0.3, 0.9)),
            Lemma::L9 => (4, 500, 0.1, 500, AvailabilityConfig::Subsets { sets: None, probs: None }),
        };
        let arms = self.arms.unwrap_or(arms);
        let availability = self.availability.clone().unwrap_or(availability);
        let model = availability.build(arms, seed)?;
        let weights = self
            .weights
            .clone()
            .map(WeightVector::new)
            .transpose()
            .map_err(|e| Error::config("weights", e.to_string()))?;
        let config = AuditConfig {
            lemma,
            model,
            t: self.t.unwrap_or(t),
            delta: self.delta.unwrap_or(delta),
            trials: self.trials.unwrap_or(trials),
            weights,
            mc_samples: self.mc_samples,
        };
        config.validate()?;
        Ok((config, seed))
    }
}

/// Runs the audit with the trial stream `(seed, 0, "audit")`.
pub fn run_audit(config: &AuditConfig, seed: u64, parallel: Option<usize>) -> Result<AuditReport> {
    with_pool(parallel, || {
        let mut rng = seeding::stream(seed, 0, "audit");
        concentration_audit(config, &mut rng)
    })?
}

pub fn audit_report_text(report: &AuditReport, seed: u64) -> String {
    let mut m = BTreeMap::new();
    m.insert("lemma".to_string(), report.lemma.to_string());
    m.insert("seed".into(), seed.to_string());
    m.insert("arms".into(), report.arms.to_string());
    m.insert("t".into(), report.t.to_string());
    m.insert("delta".into(), report.delta.to_string());
    m.insert("trials".into(), report.trials.to_string());
    m.insert("bound".into(), sig6(report.bound));
    m.insert("qstar".into(), join_sig6(&report.qstar));
    m.insert("mean_max_deviation".into(), sig6(report.mean_deviation()));
    m.insert("largest_max_deviation".into(), sig6(report.largest_deviation()));
    m.insert("violations".into(), report.violations.to_string());
    m.insert("violation_fraction".into(), sig6(report.violation_fraction));
    m.insert("result".into(), if report.passed { "pass" } else { "fail" }.into());
    m.insert("library_version".into(), env!("CARGO_PKG_VERSION").into());
    render_metadata(&m)
}

/// Writes the loss matrix and awake sets of run `run` as CSV.
pub fn dump_env(config: &ExperimentConfig, run: usize, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (availability, losses) = config.validate()?;
    let r = run as u64;
    let episode = Episode::generate(
        &availability,
        &losses,
        config.horizon,
        &mut seeding::stream(config.master_seed, r, seeding::LOSSES),
        &mut seeding::stream(config.master_seed, r, seeding::AVAILABILITY),
    )?;
    fs::create_dir_all(dir)?;
    let loss_path = dir.join(format!("{}_run{run}_losses.csv", config.id));
    let avail_path = dir.join(format!("{}_run{run}_availability.csv", config.id));
    let mut f = fs::File::create(&loss_path)?;
    write_losses_csv(&episode.losses, &mut f)?;
    f.flush()?;
    let mut f = fs::File::create(&avail_path)?;
    write_availability_csv(&episode.availability, &mut f)?;
    f.flush()?;
    Ok((loss_path, avail_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_toml(
            r#"
id = "small"
arms = 3
horizon = 3
runs = 1
master_seed = 9

[[algorithms]]
variant = "exp3-exact"

[[algorithms]]
variant = "uniform"

[availability]
kind = "independent"
range = [0.3, 0.9]

[losses]
kind = "switching"
tau = 2
mu_best = 0.2
mu_other = 0.8
"#,
        )
        .unwrap()
    }

    #[test]
    fn row_count_and_header() {
        let res = run_experiment(&small_config(), Some(1)).unwrap();
        assert_eq!(res.rows.len(), 6);
        let csv = String::from_utf8(res.csv_bytes().unwrap()).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), RESULT_HEADER.join(","));
        assert_eq!(lines.count(), 6);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = small_config();
        c.algorithms.push(AlgorithmConfig::new(Variant::Uniform));
        match c.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "algorithms[2].label"),
            other => panic!("{other:?}"),
        }
        let mut c = small_config();
        c.arms = 21;
        assert!(matches!(c.validate(), Err(Error::EnumerationCap(21))));
        let mut c = small_config();
        c.runs = 0;
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "runs"));
        let mut c = small_config();
        c.availability = AvailabilityConfig::Independent {
            probabilities: Some(vec![0.5; 2]),
            value: None,
            range: None,
        };
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "availability.probabilities"));
        let mut c = small_config();
        c.losses = LossModel::Switching {
            tau: 0,
            mu_best: 0.1,
            mu_other: 0.9,
        };
        assert!(matches!(c.validate(), Err(Error::Config { path, .. }) if path == "losses"));
    }

    #[test]
    fn unknown_fields_and_names_are_rejected() {
        let text = small_config().to_toml().replace("exp3-exact", "sleeping-cat");
        assert!(matches!(ExperimentConfig::from_toml(&text), Err(Error::Config { .. })));
        let text = format!("bogus = 1\n{}", small_config().to_toml());
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn config_round_trips_through_toml() {
        let c = small_config();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        let mut d = c.clone();
        d.master_seed += 1;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn metadata_records_run_facts() {
        let mut c = small_config();
        c.algorithms.push(AlgorithmConfig {
            variant: Variant::Exp3Mc,
            label: Some("mc-capped".into()),
            mc_max_samples: Some(2),
        });
        let res = run_experiment(&c, None).unwrap();
        let m = &res.metadata;
        assert_eq!(m["mc_max_samples.mc-capped"], "2");
        assert_eq!(m["config_hash"], c.hash());
        assert!(m.contains_key("empty_set_redraws"));
        assert!(m.contains_key("availability_probabilities"));
        assert_eq!(m["algorithms"], "exp3-exact,uniform,mc-capped");
    }

    #[test]
    fn parallelism_does_not_change_output() {
        let mut c = small_config();
        c.runs = 6;
        c.horizon = 40;
        let a = run_experiment(&c, Some(1)).unwrap().csv_bytes().unwrap();
        let b = run_experiment(&c, Some(4)).unwrap().csv_bytes().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_axes() {
        let base = small_config();
        let s = sweep(&base, SweepAxis::Arms, &[4.0, 25.0], Some(2)).unwrap();
        assert!(s.points[0].outcome.is_ok());
        assert!(s.points[1].outcome.is_err());
        let csv = String::from_utf8(s.csv_bytes().unwrap()).unwrap();
        assert!(csv.contains("enumeration_cap"));
        assert!(sweep(&base, SweepAxis::Horizon, &[], None).is_err());
        assert!(SweepAxis::Horizon.apply(&base, 2.5).is_err());
        let a = SweepAxis::Availability.apply(&base, 0.7).unwrap();
        assert!(matches!(a.availability, AvailabilityConfig::Independent { value: Some(v), .. } if v == 0.7));
        assert_eq!(a.id, "small_availability0.7");
    }

    #[test]
    fn audit_defaults_and_errors() {
        let (cfg, seed) = AuditFile::default().resolve(Some(Lemma::L9), None).unwrap();
        assert_eq!((cfg.t, cfg.trials, cfg.model.arms(), seed), (500, 500, 4, 0));
        let (cfg, _) = AuditFile::default().resolve(Some(Lemma::L1), Some(3)).unwrap();
        assert_eq!((cfg.t, cfg.delta, cfg.model.arms()), (1000, 0.05, 5));
        let zero = AuditFile {
            trials: Some(0),
            ..AuditFile::default()
        };
        assert!(matches!(zero.resolve(Some(Lemma::L1), None), Err(Error::Config { path, .. }) if path == "trials"));
        assert!(AuditFile::default().resolve(None, None).is_err());
        let loose = AuditFile {
            delta: Some(0.999),
            trials: Some(20),
            t: Some(30),
            ..AuditFile::default()
        };
        let (cfg, seed) = loose.resolve(Some(Lemma::L6), None).unwrap();
        let report = run_audit(&cfg, seed, Some(1)).unwrap();
        assert!(report.passed);
        assert!(audit_report_text(&report, seed).contains("result=pass\n"));
    }

    #[test]
    fn dump_env_writes_replayable_csv() {
        let dir = tempfile::tempdir().unwrap();
        let (losses, avail) = dump_env(&small_config(), 0, dir.path()).unwrap();
        let m = crate::environments::read_losses_csv(fs::File::open(losses).unwrap()).unwrap();
        let s = crate::environments::read_availability_csv(fs::File::open(avail).unwrap()).unwrap();
        assert_eq!(m.rounds(), 3);
        assert_eq!(s.len(), 3);
        assert!(s.iter().all(|x| !x.is_empty()));
    }
}
