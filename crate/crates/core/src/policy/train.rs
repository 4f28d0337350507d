use std::sync::Arc;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{iml_gradient, GradientEstimator, Policy, SoftmaxPolicy};
use crate::env::LoggedDataset;
use crate::error::{Error, Result};
use crate::reward::RewardPredictor;
use crate::rng::{stream_rng, Stream};
use crate::stats;
use crate::timefeat::Timestamp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Weight of the IML pessimism term.
    pub rho: f64,
    pub seed: u64,
    /// Minibatch size; `None` uses the full batch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Evaluate the oracle every this many iterations (0: first and last only).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            iterations: 100,
            rho: 0.0,
            seed: 0,
            batch_size: None,
            log_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and >= 0"));
        }
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho must be finite and >= 0"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub grad_norm: f64,
    /// True future value of the policy before this iteration's update.
    pub true_value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: SoftmaxPolicy,
    pub log: Vec<IterationLog>,
    /// True value of the final policy when an oracle was supplied.
    pub final_value: Option<f64>,
}

/// Estimator gradient plus `rho` times the IML gradient.
pub fn combined_gradient(
    estimator: &GradientEstimator,
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
    rho: f64,
) -> Result<Vec<f64>> {
    let mut g = estimator.gradient(data, policy)?;
    if rho != 0.0 {
        for (gi, hi) in g.iter_mut().zip(iml_gradient(data, policy)?) {
            *gi += rho * hi;
        }
    }
    Ok(g)
}

fn minibatch(
    data: &LoggedDataset,
    size: usize,
    seed: u64,
    iteration: usize,
) -> Result<LoggedDataset> {
    let n = data.len();
    if size >= n {
        return Ok(data.clone());
    }
    let mut rng = stream_rng(seed, Stream::Misc, iteration as u64);
    let mut picked = index::sample(&mut rng, n, size).into_vec();
    picked.sort_unstable();
    let records = picked
        .into_iter()
        .map(|i| data.records()[i].clone())
        .collect();
    LoggedDataset::new(records, data.meta().clone())
}

/// Gradient ascent `zeta <- zeta + eta * g(zeta)`. `oracle` maps a policy to
/// its true future value for logging.
pub fn train(
    data: &LoggedDataset,
    initial: &SoftmaxPolicy,
    estimator: &GradientEstimator,
    config: &TrainConfig,
    oracle: Option<&(dyn Fn(&SoftmaxPolicy) -> Result<f64> + Sync)>,
) -> Result<TrainOutput> {
    config.validate()?;
    let mut policy = initial.clone();
    let mut log = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let grad = match config.batch_size {
            None => combined_gradient(estimator, data, &policy, config.rho)?,
            Some(b) => {
                let batch = minibatch(data, b, config.seed, it)?;
                combined_gradient(estimator, &batch, &policy, config.rho)?
            }
        };
        let norm = stats::dot(&grad, &grad).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFiniteGradient {
                iteration: it,
                norm,
            });
        }
        let evaluate = it == 0 || (config.log_every > 0 && it % config.log_every == 0);
        let true_value = match oracle {
            Some(f) if evaluate => Some(f(&policy)?),
            _ => None,
        };
        log.push(IterationLog {
            iteration: it,
            grad_norm: norm,
            true_value,
        });
        for (p, g) in policy.params.iter_mut().zip(&grad) {
            *p += config.learning_rate * g;
        }
    }
    let final_value = oracle.map(|f| f(&policy)).transpose()?;
    Ok(TrainOutput {
        policy,
        log,
        final_value,
    })
}

/// Softmax over predicted rewards at a fixed reference time.
#[derive(Clone)]
pub struct RegBasedPolicy {
    model: Arc<dyn RewardPredictor>,
    beta: f64,
    t_ref: Timestamp,
    n_actions: usize,
}

impl std::fmt::Debug for RegBasedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RegBasedPolicy")
            .field("beta", &self.beta)
            .field("t_ref", &self.t_ref)
            .field("n_actions", &self.n_actions)
            .finish()
    }
}

impl Policy for RegBasedPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, x: &[f64], _t: Timestamp, out: &mut [f64]) -> Result<()> {
        let mut f = vec![0.0; self.n_actions];
        self.model.predict_all(x, self.t_ref, &mut f)?;
        stats::softmax_into(&f, self.beta, out);
        Ok(())
    }
}

/// `pi(a | x) ∝ exp(beta * f(x, t_ref, a))`.
pub fn reg_based_policy(
    model: Arc<dyn RewardPredictor>,
    beta: f64,
    t_ref: Timestamp,
    n_actions: usize,
) -> Result<RegBasedPolicy> {
    if !beta.is_finite() {
        return Err(Error::config("RegBased beta must be finite"));
    }
    Ok(RegBasedPolicy {
        model,
        beta,
        t_ref,
        n_actions,
    })
}
