use std::sync::Arc;

use rayon::prelude::*;

use super::SoftmaxPolicy;
use crate::env::{LoggedDataset, LoggedRecord};
use crate::error::{Error, Result};
use crate::estimators::{period_of, prognosticator_weights};
use crate::reward::RewardPredictor;
use crate::stats;
use crate::timefeat::{TimeDistribution, TimeFeatureFn, Timestamp};

const CHUNK: usize = 64;

/// Gradient estimator driving F-OPL training.
#[derive(Clone)]
pub enum GradientEstimator {
    Opfv {
        t_prime: Timestamp,
        phi: TimeFeatureFn,
        reward: Arc<dyn RewardPredictor>,
        pt: TimeDistribution,
    },
    Ips,
    Dr {
        reward: Arc<dyn RewardPredictor>,
    },
    Prognosticator {
        k: usize,
        delta: usize,
        d_prime: usize,
    },
}

impl std::fmt::Debug for GradientEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Opfv { t_prime, phi, .. } => {
                write!(f, "Opfv {{ t_prime: {t_prime}, phi: {} }}", phi.id())
            }
            Self::Ips => f.write_str("Ips"),
            Self::Dr { .. } => f.write_str("Dr"),
            Self::Prognosticator { k, delta, d_prime } => {
                write!(
                    f,
                    "Prognosticator {{ k: {k}, delta: {delta}, d_prime: {d_prime} }}"
                )
            }
        }
    }
}

impl GradientEstimator {
    pub fn gradient(&self, data: &LoggedDataset, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
        match self {
            Self::Opfv {
                t_prime,
                phi,
                reward,
                pt,
            } => opfv_pg(data, policy, *t_prime, phi, reward.as_ref(), pt),
            Self::Ips => ips_pg(data, policy),
            Self::Dr { reward } => dr_pg(data, policy, reward.as_ref()),
            Self::Prognosticator { k, delta, d_prime } => {
                prognosticator_pg(data, policy, *k, *delta, *d_prime)
            }
        }
    }

    /// The scalar value estimate whose gradient [`Self::gradient`] returns.
    pub fn objective(&self, data: &LoggedDataset, policy: &SoftmaxPolicy) -> Result<f64> {
        objective(self, data, policy)
    }
}

/// Per-record contribution: its weight in the average, the logit-space
/// gradient, and the scalar objective term.
struct Contribution {
    scale: f64,
    dlogits: Vec<f64>,
    value: f64,
}

type RecordFn<'a> = dyn Fn(usize, &LoggedRecord, &[f64]) -> Result<Contribution> + Sync + 'a;

fn reduce(
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
    f: &RecordFn<'_>,
) -> Result<(Vec<f64>, f64)> {
    let records = data.records();
    let partials: Vec<(Vec<f64>, Vec<f64>)> = records
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut grad = vec![0.0; policy.n_params()];
            let mut values = Vec::with_capacity(chunk.len());
            for (off, rec) in chunk.iter().enumerate() {
                let pi = policy.action_probs(&rec.x)?;
                let contrib = f(c * CHUNK + off, rec, &pi)?;
                policy.accumulate_logit_grad(&rec.x, &contrib.dlogits, contrib.scale, &mut grad)?;
                values.push(contrib.scale * contrib.value);
            }
            Ok((grad, values))
        })
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; policy.n_params()];
    let mut values = Vec::with_capacity(records.len());
    for (g, v) in partials {
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += gi;
        }
        values.extend(v);
    }
    Ok((grad, stats::sum(values.iter().copied())))
}

/// `c * (e_a - pi)`.
fn score_direction(pi: &[f64], a: usize, c: f64) -> Vec<f64> {
    let mut d: Vec<f64> = pi.iter().map(|p| -c * p).collect();
    d[a] += c;
    d
}

/// Adds `sum_a pi_a f_a (e_a - pi)` to `d`, the logit gradient of `pi . f`.
fn add_model_direction(d: &mut [f64], pi: &[f64], f: &[f64]) {
    let v = stats::dot(pi, f);
    for ((di, p), fa) in d.iter_mut().zip(pi).zip(f) {
        *di += p * (fa - v);
    }
}

fn opfv_contribution<'a>(
    n: f64,
    t_prime: Timestamp,
    phi: &'a TimeFeatureFn,
    f_hat: &'a dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<impl Fn(usize, &LoggedRecord, &[f64]) -> Result<Contribution> + Sync + 'a> {
    let p_phi = phi.marginal_prob(t_prime, pt)?;
    let target = phi.feature_of(t_prime)?;
    Ok(move |_: usize, rec: &LoggedRecord, pi: &[f64]| {
        let mut f_tp = vec![0.0; pi.len()];
        f_hat.predict_all(&rec.x, t_prime, &mut f_tp)?;
        let mut value = stats::dot(pi, &f_tp);
        let mut d = vec![0.0; pi.len()];
        if phi.feature_of(rec.t)? == target {
            let c = pi[rec.a] / rec.pscore * (rec.r - f_hat.predict(&rec.x, rec.t, rec.a)?) / p_phi;
            d = score_direction(pi, rec.a, c);
            value += c;
        }
        add_model_direction(&mut d, pi, &f_tp);
        Ok(Contribution {
            scale: 1.0 / n,
            dlogits: d,
            value,
        })
    })
}

fn dr_contribution(
    n: f64,
    f_hat: Option<&dyn RewardPredictor>,
) -> impl Fn(usize, &LoggedRecord, &[f64]) -> Result<Contribution> + Sync + '_ {
    move |_: usize, rec: &LoggedRecord, pi: &[f64]| {
        let w = pi[rec.a] / rec.pscore;
        let Some(f_hat) = f_hat else {
            return Ok(Contribution {
                scale: 1.0 / n,
                dlogits: score_direction(pi, rec.a, w * rec.r),
                value: w * rec.r,
            });
        };
        let mut f = vec![0.0; pi.len()];
        f_hat.predict_all(&rec.x, rec.t, &mut f)?;
        let c = w * (rec.r - f[rec.a]);
        let mut d = score_direction(pi, rec.a, c);
        add_model_direction(&mut d, pi, &f);
        Ok(Contribution {
            scale: 1.0 / n,
            dlogits: d,
            value: c + stats::dot(pi, &f),
        })
    }
}

fn prognosticator_contribution(
    data: &LoggedDataset,
    k: usize,
    delta: usize,
    d_prime: usize,
) -> Result<impl Fn(usize, &LoggedRecord, &[f64]) -> Result<Contribution> + Sync> {
    let c = prognosticator_weights(k, delta, d_prime)?;
    let horizon = data.horizon();
    let mut counts = vec![0usize; k];
    for rec in data.records() {
        counts[period_of(rec.t, horizon, k)] += 1;
    }
    if let Some(s) = counts.iter().position(|&m| m == 0) {
        return Err(Error::EmptySlice { slice: s + 1, k });
    }
    Ok(move |_: usize, rec: &LoggedRecord, pi: &[f64]| {
        let s = period_of(rec.t, horizon, k);
        let w = pi[rec.a] / rec.pscore;
        Ok(Contribution {
            scale: c[s] / counts[s] as f64,
            dlogits: score_direction(pi, rec.a, w * rec.r),
            value: w * rec.r,
        })
    })
}

/// OPFV policy gradient for a time-independent softmax policy.
pub fn opfv_pg(
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
    t_prime: Timestamp,
    phi: &TimeFeatureFn,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<Vec<f64>> {
    let f = opfv_contribution(data.len() as f64, t_prime, phi, f_hat, pt)?;
    Ok(reduce(data, policy, &f)?.0)
}

/// IPS policy gradient `(1/n) sum w_i r_i s(x_i, a_i)`.
pub fn ips_pg(data: &LoggedDataset, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let f = dr_contribution(data.len() as f64, None);
    Ok(reduce(data, policy, &f)?.0)
}

/// DR policy gradient with the model evaluated at the logged times.
pub fn dr_pg(
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
    f_hat: &dyn RewardPredictor,
) -> Result<Vec<f64>> {
    let f = dr_contribution(data.len() as f64, Some(f_hat));
    Ok(reduce(data, policy, &f)?.0)
}

/// `sum_k c_k ips_pg(D_k)` with the Prognosticator forecast weights `c_k`.
pub fn prognosticator_pg(
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
    k: usize,
    delta: usize,
    d_prime: usize,
) -> Result<Vec<f64>> {
    let f = prognosticator_contribution(data, k, delta, d_prime)?;
    Ok(reduce(data, policy, &f)?.0)
}

fn iml_contribution(
    n: f64,
) -> impl Fn(usize, &LoggedRecord, &[f64]) -> Result<Contribution> + Sync {
    move |_: usize, rec: &LoggedRecord, pi: &[f64]| {
        Ok(Contribution {
            scale: 1.0 / n,
            dlogits: score_direction(pi, rec.a, -1.0),
            value: -(pi[rec.a] / rec.pscore).ln(),
        })
    }
}

/// Gradient of `-(1/n) sum log(pi(a_i | x_i) / pi_0(a_i | x_i, t_i))`.
pub fn iml_gradient(data: &LoggedDataset, policy: &SoftmaxPolicy) -> Result<Vec<f64>> {
    let f = iml_contribution(data.len() as f64);
    Ok(reduce(data, policy, &f)?.0)
}

/// `-(1/n) sum log(pi(a_i | x_i) / pi_0(a_i | x_i, t_i))`.
pub fn iml_objective(data: &LoggedDataset, policy: &SoftmaxPolicy) -> Result<f64> {
    let f = iml_contribution(data.len() as f64);
    Ok(reduce(data, policy, &f)?.1)
}

/// Scalar estimate matching `estimator.gradient`.
pub fn objective(
    estimator: &GradientEstimator,
    data: &LoggedDataset,
    policy: &SoftmaxPolicy,
) -> Result<f64> {
    let n = data.len() as f64;
    let (_, value) = match estimator {
        GradientEstimator::Opfv {
            t_prime,
            phi,
            reward,
            pt,
        } => {
            let f = opfv_contribution(n, *t_prime, phi, reward.as_ref(), pt)?;
            reduce(data, policy, &f)?
        }
        GradientEstimator::Ips => reduce(data, policy, &dr_contribution(n, None))?,
        GradientEstimator::Dr { reward } => {
            reduce(data, policy, &dr_contribution(n, Some(reward.as_ref())))?
        }
        GradientEstimator::Prognosticator { k, delta, d_prime } => {
            let f = prognosticator_contribution(data, *k, *delta, *d_prime)?;
            reduce(data, policy, &f)?
        }
    };
    Ok(value)
}
