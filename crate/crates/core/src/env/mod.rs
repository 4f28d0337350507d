//! Synthetic non-stationary bandit environment with a known expected reward.
//!
//! `q(x, t, a) = lambda * g(x, phi_true(t), a) + (1 - lambda) * h(x, t, a)`
//! where `g` depends on time only through the season feature `phi_true` and
//! `h` through the weekday feature `phi_f`. Logging is a softmax of `q` and
//! the evaluation policy is epsilon-greedy on `q`. Because `q` is known the
//! environment doubles as the ground-truth oracle for every experiment.

mod dataset;

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dataset::{sidecar_path, DatasetMeta, LoggedDataset, LoggedRecord};

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::rng::{stream_rng, Stream};
use crate::stats;
use crate::timefeat::{TimeDistribution, TimeFeatureFn, Timestamp, SECONDS_PER_YEAR};

/// Last second of the logging year.
pub const LOGGING_END: Timestamp = SECONDS_PER_YEAR - 1;
/// Last second of the target year; every feature is defined up to here.
pub const DOMAIN_END: Timestamp = 2 * SECONDS_PER_YEAR - 1;
/// Normalizer for the drifting context mean: the start of the third year.
const DRIFT_HORIZON: Timestamp = 2 * SECONDS_PER_YEAR;

/// Environment parameters. Serializes to JSON for exact replay: the
/// coefficient tensors are regenerated from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub seed: u64,
    pub context_dim: usize,
    pub n_actions: usize,
    /// Weight of the season effect `g` in `q`.
    pub lambda: f64,
    /// Weight of the season-driven context component; `1` keeps contexts
    /// stationary standard normal.
    pub alpha: f64,
    /// Inverse temperature of the logging softmax.
    pub beta: f64,
    /// Noise of the epsilon-greedy evaluation policy.
    pub epsilon: f64,
    /// Reward noise standard deviation.
    pub sigma: f64,
    /// Number of seasons in `phi_true` (and `phi_x`).
    pub true_seasons: u32,
    /// Pin every context to this vector (degenerate context distribution).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_context: Option<Vec<f64>>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            context_dim: 10,
            n_actions: 10,
            lambda: 0.5,
            alpha: 1.0,
            beta: 0.1,
            epsilon: 0.2,
            sigma: 1.0,
            true_seasons: 8,
            fixed_context: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(format!(
                    "env.{name} must lie in [0, 1], got {v}"
                )))
            }
        };
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        unit("epsilon", self.epsilon)?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::config(format!(
                "env.sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !self.beta.is_finite() {
            return Err(Error::config("env.beta must be finite"));
        }
        if self.context_dim == 0 || self.n_actions == 0 || self.true_seasons == 0 {
            return Err(Error::config(
                "env.context_dim, env.n_actions and env.true_seasons must be positive",
            ));
        }
        if let Some(x) = &self.fixed_context {
            if x.len() != self.context_dim {
                return Err(Error::config(
                    "env.fixed_context length must equal env.context_dim",
                ));
            }
        }
        Ok(())
    }
}

/// Environment for `seed` with a JSON object of field overrides applied on
/// top of the defaults.
pub fn make_env(seed: u64, overrides: &serde_json::Value) -> Result<SyntheticEnv> {
    let mut base = serde_json::to_value(EnvConfig {
        seed,
        ..EnvConfig::default()
    })?;
    match overrides {
        serde_json::Value::Null => {}
        serde_json::Value::Object(fields) => {
            let obj = base
                .as_object_mut()
                .expect("config serializes to an object");
            for (k, v) in fields {
                obj.insert(k.clone(), v.clone());
            }
        }
        other => {
            return Err(Error::config(format!(
                "env overrides must be a JSON object, got {other}"
            )))
        }
    }
    SyntheticEnv::new(serde_json::from_value(base)?)
}

/// Coefficient tensors of `g` (Uniform(-3, 3)) and `h` (Uniform(-1, 1)),
/// plus the context-drift parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub nu_x: Vec<f64>,
    pub nu_phi: Vec<f64>,
    /// `[season][action]`
    pub m_phi_a: Vec<Vec<f64>>,
    /// `[threshold][season * A + action]`
    pub m_x_phi_a: Vec<Vec<f64>>,
    pub xi_x: Vec<f64>,
    pub xi_phi_f: Vec<f64>,
    pub xi_a: Vec<f64>,
    /// `[weekday][action]`
    pub m_phi_f_a: Vec<Vec<f64>>,
    /// `[threshold][action]`
    pub m_x_a: Vec<Vec<f64>>,
    /// `[threshold][weekday * A + action]`
    pub m_x_phi_f_a: Vec<Vec<f64>>,
    /// Per-season context mean of the feature-driven component.
    pub gamma: Vec<f64>,
    /// Slope of the drifting context mean.
    pub kappa: f64,
}

impl Coefficients {
    fn draw(cfg: &EnvConfig, weekdays: usize) -> Self {
        let mut rng = stream_rng(cfg.seed, Stream::Coefficients, 0);
        let seasons = cfg.true_seasons as usize;
        let a = cfg.n_actions;
        let mut vec = |len: usize, scale: f64| -> Vec<f64> {
            (0..len).map(|_| rng.random_range(-scale..scale)).collect()
        };
        let nu_x = vec(4, 3.0);
        let nu_phi = vec(seasons, 3.0);
        let m_phi_a = (0..seasons).map(|_| vec(a, 3.0)).collect();
        let m_x_phi_a = (0..3).map(|_| vec(seasons * a, 3.0)).collect();
        let xi_x = vec(3, 1.0);
        let xi_phi_f = vec(weekdays, 1.0);
        let xi_a = vec(a, 1.0);
        let m_phi_f_a = (0..weekdays).map(|_| vec(a, 1.0)).collect();
        let m_x_a = (0..4).map(|_| vec(a, 1.0)).collect();
        let m_x_phi_f_a = (0..4).map(|_| vec(weekdays * a, 1.0)).collect();
        let gamma = vec(seasons, 3.0);
        let kappa = vec(1, 1.0)[0];
        Self {
            nu_x,
            nu_phi,
            m_phi_a,
            m_x_phi_a,
            xi_x,
            xi_phi_f,
            xi_a,
            m_phi_f_a,
            m_x_a,
            m_x_phi_f_a,
            gamma,
            kappa,
        }
    }
}

/// Sum of `x_lo..=x_hi` with 1-based indices; dimensions beyond the context
/// length contribute zero.
fn range_sum(x: &[f64], lo: usize, hi: usize) -> f64 {
    (lo..=hi).filter_map(|d| x.get(d - 1)).sum()
}

fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Threshold features `s_g1, s_g2, s_h1, s_h2, s_h3` of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub g1: [f64; 4],
    pub g2: [f64; 3],
    pub h1: [f64; 3],
    pub h2: [f64; 4],
    pub h3: [f64; 4],
}

impl Thresholds {
    pub fn of(x: &[f64]) -> Self {
        let s = |lo, hi| range_sum(x, lo, hi);
        Self {
            g1: [
                ind(s(1, 4) < 1.5),
                ind(s(6, 9) < -0.5),
                ind(s(4, 5) > 3.0),
                ind(s(7, 10) > 3.0),
            ],
            g2: [ind(s(1, 4) < 4.0), ind(s(6, 9) > 3.0), ind(s(3, 10) < -2.5)],
            h1: [ind(s(1, 6) < 2.5), ind(s(8, 9) < -0.5), ind(s(3, 5) > 2.0)],
            h2: [
                ind(s(1, 4) < 3.0),
                ind(s(3, 9) > 2.5),
                ind(s(2, 7) < 1.5),
                ind(s(7, 10) > -1.5),
            ],
            h3: [
                ind(s(1, 4) < 4.0),
                ind(s(3, 9) > 3.5),
                ind(s(3, 5) > 1.5),
                ind(s(6, 10) < 2.5),
            ],
        }
    }
}

/// The synthetic environment. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SyntheticEnv {
    config: EnvConfig,
    phi_true: TimeFeatureFn,
    phi_f: TimeFeatureFn,
    coef: Coefficients,
}

impl SyntheticEnv {
    /// Build the environment for `config` (coefficients drawn from `config.seed`).
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let phi_true = TimeFeatureFn::seasons(config.true_seasons, DOMAIN_END)?;
        let phi_f = TimeFeatureFn::day_of_week(DOMAIN_END);
        let coef = Coefficients::draw(&config, phi_f.cardinality());
        Ok(Self {
            config,
            phi_true,
            phi_f,
            coef,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coef
    }

    pub fn n_actions(&self) -> usize {
        self.config.n_actions
    }

    pub fn context_dim(&self) -> usize {
        self.config.context_dim
    }

    /// Season feature driving `g` and the drifting context.
    pub fn phi_true(&self) -> &TimeFeatureFn {
        &self.phi_true
    }

    /// Weekday feature driving `h`.
    pub fn phi_f(&self) -> &TimeFeatureFn {
        &self.phi_f
    }

    pub fn logging_end(&self) -> Timestamp {
        LOGGING_END
    }

    /// Distribution of logging timestamps: uniform over the logging year.
    pub fn time_distribution(&self) -> TimeDistribution {
        TimeDistribution::uniform(0, LOGGING_END).expect("non-empty logging window")
    }

    /// Season effect for an explicit season index.
    pub fn g_by_feature(&self, th: &Thresholds, season: usize, a: usize) -> f64 {
        let c = &self.coef;
        let n_a = self.config.n_actions;
        let mut v = stats::dot(&c.nu_x, &th.g1) + c.nu_phi[season] + c.m_phi_a[season][a];
        for (k, s) in th.g2.iter().enumerate() {
            v += s * c.m_x_phi_a[k][season * n_a + a];
        }
        v
    }

    fn h_by_feature(&self, th: &Thresholds, weekday: usize, a: usize) -> f64 {
        let c = &self.coef;
        let n_a = self.config.n_actions;
        let mut v =
            stats::dot(&c.xi_x, &th.h1) + c.xi_phi_f[weekday] + c.xi_a[a] + c.m_phi_f_a[weekday][a];
        for (k, s) in th.h2.iter().enumerate() {
            v += s * c.m_x_a[k][a];
        }
        for (k, s) in th.h3.iter().enumerate() {
            v += s * c.m_x_phi_f_a[k][weekday * n_a + a];
        }
        v
    }

    /// Time-feature effect `g(x, phi_true(t), a)`.
    pub fn g(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        Ok(self.g_by_feature(&Thresholds::of(x), self.phi_true.feature_of(t)?, a))
    }

    /// Residual effect `h(x, t, a)`.
    pub fn h(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        Ok(self.h_by_feature(&Thresholds::of(x), self.phi_f.feature_of(t)?, a))
    }

    /// `q(x, t, a)`.
    pub fn expected_reward(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        if a >= self.config.n_actions {
            return Err(Error::config(format!("action {a} out of range")));
        }
        let th = Thresholds::of(x);
        let lam = self.config.lambda;
        let season = self.phi_true.feature_of(t)?;
        let weekday = self.phi_f.feature_of(t)?;
        Ok(lam * self.g_by_feature(&th, season, a)
            + (1.0 - lam) * self.h_by_feature(&th, weekday, a))
    }

    /// `q(x, t, .)` for every action.
    pub fn expected_rewards(&self, x: &[f64], t: Timestamp) -> Result<Vec<f64>> {
        let th = Thresholds::of(x);
        let lam = self.config.lambda;
        let season = self.phi_true.feature_of(t)?;
        let weekday = self.phi_f.feature_of(t)?;
        Ok((0..self.config.n_actions)
            .map(|a| {
                lam * self.g_by_feature(&th, season, a)
                    + (1.0 - lam) * self.h_by_feature(&th, weekday, a)
            })
            .collect())
    }

    /// `pi_0(.|x, t) = softmax(beta * q(x, t, .))`.
    pub fn logging_policy(&self, x: &[f64], t: Timestamp) -> Result<Vec<f64>> {
        Ok(stats::softmax(
            &self.expected_rewards(x, t)?,
            self.config.beta,
        ))
    }

    /// Epsilon-greedy on `q(x, t, .)`; ties go to the lowest action.
    pub fn evaluation_policy(&self, x: &[f64], t: Timestamp, epsilon: f64) -> Result<Vec<f64>> {
        let q = self.expected_rewards(x, t)?;
        Ok(epsilon_greedy(&q, epsilon))
    }

    /// Draw a context from `p(x | t)`.
    pub fn sample_context<R: Rng + ?Sized>(&self, t: Timestamp, rng: &mut R) -> Result<Vec<f64>> {
        if let Some(x) = &self.config.fixed_context {
            return Ok(x.clone());
        }
        let d = self.config.context_dim;
        let mean = if self.config.alpha >= 1.0 {
            0.0
        } else if rng.random_bool(self.config.alpha) {
            self.coef.gamma[self.phi_true.feature_of(t)?]
        } else {
            self.coef.kappa * t as f64 / DRIFT_HORIZON as f64
        };
        Ok((0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                mean + z
            })
            .collect())
    }

    /// Sample `n` i.i.d. logged records from the logging year. Record `i` uses
    /// its own random stream, so the result does not depend on thread count.
    pub fn sample_logged_data(&self, n: usize, seed: u64) -> Result<LoggedDataset> {
        self.sample_logged_data_with(n, seed, &self.time_distribution())
    }

    /// As [`Self::sample_logged_data`] with timestamps drawn from `pt`, which
    /// must stay inside the logging window.
    pub fn sample_logged_data_with(
        &self,
        n: usize,
        seed: u64,
        pt: &TimeDistribution,
    ) -> Result<LoggedDataset> {
        if n == 0 {
            return Err(Error::config("sample size must be >= 1"));
        }
        let records = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, Stream::Records, i as u64);
                let t = pt.sample(&mut rng);
                let x = self.sample_context(t, &mut rng)?;
                let q = self.expected_rewards(&x, t)?;
                let pi0 = stats::softmax(&q, self.config.beta);
                let a = sample_categorical(&pi0, &mut rng);
                let noise: f64 = StandardNormal.sample(&mut rng);
                Ok(LoggedRecord {
                    r: q[a] + self.config.sigma * noise,
                    pscore: pi0[a],
                    x,
                    t,
                    a,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LoggedDataset::new(
            records,
            DatasetMeta {
                horizon: LOGGING_END.max(pt.upper()),
                n_actions: self.config.n_actions,
                context_dim: self.config.context_dim,
                env: Some(self.config.clone()),
                data_seed: Some(seed),
            },
        )
    }

    /// Monte Carlo estimate of `V_{t'}(pi) = E_{p(x|t')}[sum_a pi(a|x,t') q(x,t',a)]`.
    /// Actions are summed exactly; only the context is sampled.
    pub fn true_policy_value(
        &self,
        policy: &dyn Policy,
        t_prime: Timestamp,
        n_mc: usize,
        seed: u64,
    ) -> Result<ValueEstimate> {
        if n_mc == 0 {
            return Err(Error::config("n_mc must be >= 1"));
        }
        let values = (0..n_mc)
            .into_par_iter()
            .map(|j| {
                let mut rng = stream_rng(seed, Stream::Oracle, j as u64);
                let x = self.sample_context(t_prime, &mut rng)?;
                let q = self.expected_rewards(&x, t_prime)?;
                let pi = policy.probs(&x, t_prime)?;
                Ok(stats::dot(&pi, &q))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ValueEstimate {
            mean: stats::mean(&values),
            se: if n_mc > 1 {
                stats::std_error(&values)
            } else {
                0.0
            },
            n: n_mc,
        })
    }
}

/// Mean and standard error of a Monte Carlo value estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

pub fn epsilon_greedy(q: &[f64], epsilon: f64) -> Vec<f64> {
    let n = q.len();
    let best = stats::argmax(q);
    let mut p = vec![epsilon / n as f64; n];
    p[best] += 1.0 - epsilon;
    p
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last
    // action with positive mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// The environment's logging policy as a [`Policy`].
#[derive(Debug, Clone)]
pub struct LoggingPolicy(pub Arc<SyntheticEnv>);

impl Policy for LoggingPolicy {
    fn n_actions(&self) -> usize {
        self.0.n_actions()
    }

    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.0.logging_policy(x, t)?);
        Ok(())
    }
}

/// Epsilon-greedy policy on the true `q`; `epsilon = 0` is the greedy oracle.
#[derive(Debug, Clone)]
pub struct EvaluationPolicy {
    pub env: Arc<SyntheticEnv>,
    pub epsilon: f64,
}

impl EvaluationPolicy {
    pub fn new(env: Arc<SyntheticEnv>) -> Self {
        let epsilon = env.config().epsilon;
        Self { env, epsilon }
    }
}

impl Policy for EvaluationPolicy {
    fn n_actions(&self) -> usize {
        self.env.n_actions()
    }

    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.env.evaluation_policy(x, t, self.epsilon)?);
        Ok(())
    }
}
