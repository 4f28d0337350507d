use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{make_env, EnvConfig, SyntheticEnv, DOMAIN_END, LOGGING_END};
use crate::error::{Error, Result};
use crate::policy::{SoftmaxSpec, TrainConfig};
use crate::reward::{RewardKind, RewardModelSpec};
use crate::timefeat::{day_start, FeatureSpec, TimeFeatureFn, Timestamp, SECONDS_PER_YEAR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fope,
    Fopl,
    Tune,
    Sweep,
}

/// Either a replicate count (seeds `0..count`) or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// A point in time given as year (0 = logging year), day of year and second
/// of day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetTime {
    pub year: i64,
    pub day: i64,
    pub second: i64,
}

impl Default for TargetTime {
    fn default() -> Self {
        Self {
            year: 1,
            day: 22,
            second: 0,
        }
    }
}

impl TargetTime {
    pub fn timestamp(&self) -> Timestamp {
        day_start(self.year, self.day) + self.second
    }
}

/// Target times spread over the second year: `times_per_season` evenly
/// spaced points inside each of `seasons` equal seasons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetGrid {
    pub seasons: u32,
    pub times_per_season: usize,
}

impl Default for TargetGrid {
    fn default() -> Self {
        Self {
            seasons: 8,
            times_per_season: 1,
        }
    }
}

impl TargetGrid {
    /// Target times inside season `season` (1-based) of the second year.
    pub fn season_times(&self, season: u32) -> Vec<Timestamp> {
        let len = SECONDS_PER_YEAR / self.seasons as i64;
        let start = SECONDS_PER_YEAR + (season as i64 - 1) * len;
        let m = self.times_per_season as i64;
        (0..m)
            .map(|j| start + (2 * j + 1) * len / (2 * m))
            .collect()
    }

    pub fn times(&self) -> Vec<Timestamp> {
        (1..=self.seasons)
            .flat_map(|s| self.season_times(s))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.seasons == 0 || self.times_per_season == 0 {
            return Err(Error::config(
                "target grid needs seasons >= 1 and times_per_season >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TargetTime,
    Lambda,
    N,
    PhiCardinality,
    Alpha,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::TargetTime => "target_time",
            SweepAxis::Lambda => "lambda",
            SweepAxis::N => "n",
            SweepAxis::PhiCardinality => "phi_cardinality",
            SweepAxis::Alpha => "alpha",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Fope,
    Fopl,
}

/// For the target-time axis the values are season numbers `1..=k` of the
/// second year, each averaged over `times_per_season` target times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_task")]
    pub task: Task,
    #[serde(default = "default_times_per_season")]
    pub times_per_season: usize,
    #[serde(default = "default_season_count")]
    pub seasons: u32,
}

fn default_task() -> Task {
    Task::Fope
}

fn default_times_per_season() -> usize {
    4
}

fn default_season_count() -> u32 {
    8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerKind {
    Ips,
    Dr,
}

fn true_phi() -> FeatureSpec {
    FeatureSpec::simple("true")
}

fn two_stage() -> RewardModelSpec {
    RewardModelSpec::of_kind(RewardKind::TwoStage)
}

fn static_direct() -> RewardModelSpec {
    RewardModelSpec {
        phi: FeatureSpec::simple("constant"),
        ..RewardModelSpec::default()
    }
}

fn default_ladder() -> Vec<u32> {
    vec![2, 4, 8, 16]
}

fn default_k() -> usize {
    8
}

fn default_d_prime() -> Vec<usize> {
    vec![3, 5, 7]
}

fn default_inner() -> InnerKind {
    InnerKind::Ips
}

fn default_beta() -> f64 {
    10.0
}

/// Off-policy estimators. A `phi` of kind `"true"` resolves to the
/// environment's true season feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorSpec {
    Ips {
        #[serde(default)]
        label: Option<String>,
    },
    Dr {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
    Opfv {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "true_phi")]
        phi: FeatureSpec,
        #[serde(default = "two_stage")]
        reward: RewardModelSpec,
    },
    OpfvTuned {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_ladder")]
        ladder: Vec<u32>,
        #[serde(default = "two_stage")]
        reward: RewardModelSpec,
    },
    OpfvExtended {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "true_phi")]
        phi_x: FeatureSpec,
        #[serde(default = "true_phi")]
        phi_r: FeatureSpec,
        #[serde(default = "two_stage")]
        reward: RewardModelSpec,
    },
    /// With several `d_prime` values the one with the lowest true MSE is
    /// reported for each sweep value.
    Prognosticator {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_d_prime")]
        d_prime: Vec<usize>,
        #[serde(default = "default_inner")]
        inner: InnerKind,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
    /// Periods map to features by `(period - 1) % cycle`.
    PrognosticatorPhi {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default)]
        cycle: Option<usize>,
        #[serde(default = "default_inner")]
        inner: InnerKind,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
    Dm {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
    Snips {
        #[serde(default)]
        label: Option<String>,
    },
    Sndr {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
}

impl EstimatorSpec {
    pub fn label(&self) -> String {
        let (label, name) = match self {
            EstimatorSpec::Ips { label } => (label, "ips"),
            EstimatorSpec::Dr { label, .. } => (label, "dr"),
            EstimatorSpec::Opfv { label, .. } => (label, "opfv"),
            EstimatorSpec::OpfvTuned { label, .. } => (label, "opfv_tuned"),
            EstimatorSpec::OpfvExtended { label, .. } => (label, "opfv_extended"),
            EstimatorSpec::Prognosticator { label, .. } => (label, "prognosticator"),
            EstimatorSpec::PrognosticatorPhi { label, .. } => (label, "prognosticator_phi"),
            EstimatorSpec::Dm { label, .. } => (label, "dm"),
            EstimatorSpec::Snips { label } => (label, "snips"),
            EstimatorSpec::Sndr { label, .. } => (label, "sndr"),
        };
        label.clone().unwrap_or_else(|| name.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    OpfvPg {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "true_phi")]
        phi: FeatureSpec,
        #[serde(default = "two_stage")]
        reward: RewardModelSpec,
    },
    IpsPg {
        #[serde(default)]
        label: Option<String>,
    },
    DrPg {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
    },
    /// With several `d_prime` values the one with the highest mean true
    /// value is reported for each sweep value.
    PrognosticatorPg {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "default_k")]
        k: usize,
        #[serde(default = "default_d_prime")]
        d_prime: Vec<usize>,
    },
    /// Softmax over predicted rewards at `t_ref` (default: end of logging).
    RegBased {
        #[serde(default)]
        label: Option<String>,
        #[serde(default = "static_direct")]
        reward: RewardModelSpec,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        t_ref: Option<Timestamp>,
    },
}

impl LearnerSpec {
    pub fn label(&self) -> String {
        let (label, name) = match self {
            LearnerSpec::OpfvPg { label, .. } => (label, "opfv_pg"),
            LearnerSpec::IpsPg { label } => (label, "ips_pg"),
            LearnerSpec::DrPg { label, .. } => (label, "dr_pg"),
            LearnerSpec::PrognosticatorPg { label, .. } => (label, "prognosticator_pg"),
            LearnerSpec::RegBased { label, .. } => (label, "reg_based"),
        };
        label.clone().unwrap_or_else(|| name.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    Dm,
    Snips,
    Sndr,
}

impl Evaluator {
    pub fn name(&self) -> &'static str {
        match self {
            Evaluator::Dm => "dm",
            Evaluator::Snips => "snips",
            Evaluator::Sndr => "sndr",
        }
    }
}

/// Held-out data logged at the target time for scoring learned policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutSpec {
    pub n: usize,
    pub evaluators: Vec<Evaluator>,
    pub reward: RewardModelSpec,
}

impl Default for HoldoutSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            evaluators: vec![Evaluator::Dm, Evaluator::Snips, Evaluator::Sndr],
            reward: static_direct(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSpec {
    pub ladder: Vec<u32>,
    pub reward: RewardModelSpec,
}

impl Default for TuneSpec {
    fn default() -> Self {
        Self {
            ladder: default_ladder(),
            reward: two_stage(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Overrides merged into the default environment configuration.
    pub env: Value,
    /// Seed of the environment coefficients, shared by all replicates.
    pub env_seed: u64,
    pub n: usize,
    pub seeds: Seeds,
    pub target: TargetTime,
    /// Evaluate at a grid of target times instead of `target`; every target
    /// time yields its own replicate rows.
    pub target_grid: Option<TargetGrid>,
    /// Monte Carlo contexts per ground-truth value.
    pub n_mc: usize,
    pub oracle_seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    pub learners: Vec<LearnerSpec>,
    pub train: TrainConfig,
    pub policy: SoftmaxSpec,
    pub holdout: Option<HoldoutSpec>,
    pub tune: TuneSpec,
    pub sweep: Option<SweepSpec>,
    /// Worker threads; `OPFV_NUM_WORKERS` takes precedence.
    pub workers: Option<usize>,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fope,
            env: Value::Object(Default::default()),
            env_seed: 0,
            n: 1000,
            seeds: Seeds::Count(10),
            target: TargetTime::default(),
            target_grid: None,
            n_mc: 100_000,
            oracle_seed: 7,
            estimators: vec![
                EstimatorSpec::Opfv {
                    label: None,
                    phi: true_phi(),
                    reward: two_stage(),
                },
                EstimatorSpec::OpfvTuned {
                    label: None,
                    ladder: default_ladder(),
                    reward: two_stage(),
                },
                EstimatorSpec::Ips { label: None },
                EstimatorSpec::Dr {
                    label: None,
                    reward: static_direct(),
                },
                EstimatorSpec::Prognosticator {
                    label: None,
                    k: default_k(),
                    d_prime: default_d_prime(),
                    inner: InnerKind::Ips,
                    reward: static_direct(),
                },
            ],
            learners: vec![
                LearnerSpec::OpfvPg {
                    label: None,
                    phi: true_phi(),
                    reward: two_stage(),
                },
                LearnerSpec::IpsPg { label: None },
                LearnerSpec::DrPg {
                    label: None,
                    reward: static_direct(),
                },
                LearnerSpec::PrognosticatorPg {
                    label: None,
                    k: default_k(),
                    d_prime: default_d_prime(),
                },
                LearnerSpec::RegBased {
                    label: None,
                    reward: static_direct(),
                    beta: default_beta(),
                    t_ref: None,
                },
            ],
            train: TrainConfig::default(),
            policy: SoftmaxSpec::default(),
            holdout: None,
            tune: TuneSpec::default(),
            sweep: None,
            workers: None,
            out: None,
        }
    }
}

/// Set a dotted `path` inside a JSON object. The value is parsed as JSON
/// when possible and kept as a string otherwise.
pub fn apply_override(config: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::config(format!(
            "override key `{path}` has an empty segment"
        )));
    }
    let mut node = config;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::config(format!("override `{path}` descends into a non-object"))
        })?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
    }
    node.as_object_mut()
        .ok_or_else(|| Error::config(format!("override `{path}` descends into a non-object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let config: Self =
            serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Read a JSON config and apply `key=value` overrides before parsing.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config `{}`: {e}", path.display())))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| {
            Error::config(format!(
                "config `{}` is not valid JSON: {e}",
                path.display()
            ))
        })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    /// Environment for one sweep value. Lambda and alpha sweeps override the
    /// configured environment.
    pub fn env_config(&self, axis: Option<SweepAxis>, value: f64) -> Result<Value> {
        let mut env = self.env.clone();
        if !env.is_object() {
            return Err(Error::config("`env` must be an object of overrides"));
        }
        let key = match axis {
            Some(SweepAxis::Lambda) => Some("lambda"),
            Some(SweepAxis::Alpha) => Some("alpha"),
            _ => None,
        };
        if let Some(key) = key {
            env.as_object_mut()
                .expect("object")
                .insert(key.into(), value.into());
        }
        Ok(env)
    }

    pub fn build_env(&self, axis: Option<SweepAxis>, value: f64) -> Result<Arc<SyntheticEnv>> {
        Ok(Arc::new(make_env(
            self.env_seed,
            &self.env_config(axis, value)?,
        )?))
    }

    pub fn resolved_env(&self) -> Result<EnvConfig> {
        Ok(self.build_env(None, 0.0)?.config().clone())
    }

    /// The sweep driving this run, if any.
    pub fn active_sweep(&self) -> Option<&SweepSpec> {
        self.sweep.as_ref()
    }

    pub fn task(&self) -> Task {
        match (self.mode, &self.sweep) {
            (Mode::Fopl, _) => Task::Fopl,
            (Mode::Sweep, Some(s)) => s.task,
            _ => Task::Fope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.list().is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.n == 0 {
            return Err(Error::config("n must be >= 1"));
        }
        if self.n_mc == 0 {
            return Err(Error::config("n_mc must be >= 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be >= 1"));
        }
        if self.mode == Mode::Sweep && self.sweep.is_none() {
            return Err(Error::config("sweep mode needs a `sweep` block"));
        }
        let t_prime = self.target.timestamp();
        if !(t_prime > LOGGING_END && t_prime <= DOMAIN_END) {
            return Err(Error::config(format!(
                "target time {t_prime} must lie in the second year ({}..={DOMAIN_END})",
                LOGGING_END + 1
            )));
        }
        if let Some(grid) = &self.target_grid {
            grid.validate()?;
        }
        self.train.validate()?;
        let env = self.build_env(None, 0.0)?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(Error::config("sweep values must be non-empty"));
            }
            for &v in &sweep.values {
                self.check_sweep_value(sweep, v)?;
            }
        }
        let true_seasons = env.config().true_seasons;
        let task = self.task();
        if task == Task::Fope || self.mode == Mode::Tune {
            for e in &self.estimators {
                check_estimator(e, true_seasons)?;
            }
        }
        if task == Task::Fopl && self.mode != Mode::Tune {
            for l in &self.learners {
                check_learner(l, true_seasons)?;
            }
        }
        if self.tune.ladder.is_empty() {
            return Err(Error::config("tune ladder must be non-empty"));
        }
        let mut labels: Vec<String> = match task {
            Task::Fope => self.estimators.iter().map(EstimatorSpec::label).collect(),
            Task::Fopl => self.learners.iter().map(LearnerSpec::label).collect(),
        };
        let total = labels.len();
        labels.sort();
        labels.dedup();
        if labels.len() != total {
            return Err(Error::config("method labels must be unique"));
        }
        Ok(())
    }

    fn check_sweep_value(&self, sweep: &SweepSpec, v: f64) -> Result<()> {
        let integral = v.fract() == 0.0 && v >= 1.0;
        match sweep.axis {
            SweepAxis::TargetTime => {
                if !integral || v > sweep.seasons as f64 {
                    return Err(Error::config(format!(
                        "target_time sweep values are season numbers 1..={}, got {v}",
                        sweep.seasons
                    )));
                }
                if sweep.times_per_season == 0 {
                    return Err(Error::config("times_per_season must be >= 1"));
                }
            }
            SweepAxis::N | SweepAxis::PhiCardinality => {
                if !integral {
                    return Err(Error::config(format!(
                        "{} sweep values must be positive integers",
                        sweep.axis.name()
                    )));
                }
            }
            SweepAxis::Lambda | SweepAxis::Alpha => {
                self.build_env(Some(sweep.axis), v)?;
            }
        }
        Ok(())
    }

    /// Target times for one sweep value.
    pub fn targets(&self, value: f64) -> Vec<Timestamp> {
        match (&self.sweep, &self.target_grid) {
            (Some(s), _) if s.axis == SweepAxis::TargetTime => TargetGrid {
                seasons: s.seasons,
                times_per_season: s.times_per_season,
            }
            .season_times(value as u32),
            (_, Some(grid)) => grid.times(),
            _ => vec![self.target.timestamp()],
        }
    }

    pub fn sample_size(&self, value: f64) -> usize {
        match &self.sweep {
            Some(s) if s.axis == SweepAxis::N => value as usize,
            _ => self.n,
        }
    }
}

/// Resolve a feature spec, mapping kind `"true"` to the true season feature.
pub fn resolve_phi(spec: &FeatureSpec, true_seasons: u32) -> Result<TimeFeatureFn> {
    if spec.kind == "true" {
        TimeFeatureFn::seasons(true_seasons, DOMAIN_END)
    } else {
        TimeFeatureFn::from_spec(spec, DOMAIN_END)
    }
}

fn check_reward(spec: &RewardModelSpec) -> Result<()> {
    if spec.kind == RewardKind::Direct {
        TimeFeatureFn::from_spec(&spec.phi, DOMAIN_END)?;
    }
    Ok(())
}

fn check_d_prime(k: usize, d_prime: &[usize]) -> Result<()> {
    if k == 0 {
        return Err(Error::config("Prognosticator needs k >= 1"));
    }
    if d_prime.is_empty() {
        return Err(Error::config("Prognosticator needs at least one d_prime"));
    }
    Ok(())
}

fn check_estimator(spec: &EstimatorSpec, true_seasons: u32) -> Result<()> {
    match spec {
        EstimatorSpec::Ips { .. } | EstimatorSpec::Snips { .. } => Ok(()),
        EstimatorSpec::Dr { reward, .. }
        | EstimatorSpec::Dm { reward, .. }
        | EstimatorSpec::Sndr { reward, .. } => check_reward(reward),
        EstimatorSpec::Opfv { phi, reward, .. } => {
            resolve_phi(phi, true_seasons)?;
            check_reward(reward)
        }
        EstimatorSpec::OpfvTuned { ladder, reward, .. } => {
            crate::tuning::CandidateSet::ladder(ladder, DOMAIN_END)?;
            check_reward(reward)
        }
        EstimatorSpec::OpfvExtended {
            phi_x,
            phi_r,
            reward,
            ..
        } => {
            resolve_phi(phi_x, true_seasons)?;
            resolve_phi(phi_r, true_seasons)?;
            check_reward(reward)
        }
        EstimatorSpec::Prognosticator {
            k, d_prime, reward, ..
        } => {
            check_d_prime(*k, d_prime)?;
            check_reward(reward)
        }
        EstimatorSpec::PrognosticatorPhi {
            k, cycle, reward, ..
        } => {
            if *k == 0 || *cycle == Some(0) {
                return Err(Error::config(
                    "Prognosticator-phi needs k >= 1 and cycle >= 1",
                ));
            }
            check_reward(reward)
        }
    }
}

fn check_learner(spec: &LearnerSpec, true_seasons: u32) -> Result<()> {
    match spec {
        LearnerSpec::IpsPg { .. } => Ok(()),
        LearnerSpec::OpfvPg { phi, reward, .. } => {
            resolve_phi(phi, true_seasons)?;
            check_reward(reward)
        }
        LearnerSpec::DrPg { reward, .. } => check_reward(reward),
        LearnerSpec::PrognosticatorPg { k, d_prime, .. } => check_d_prime(*k, d_prime),
        LearnerSpec::RegBased { reward, beta, .. } => {
            if !beta.is_finite() {
                return Err(Error::config("reg_based beta must be finite"));
            }
            check_reward(reward)
        }
    }
}
