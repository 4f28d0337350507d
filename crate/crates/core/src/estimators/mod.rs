//! Point estimators of a policy's value: the stationary baselines (IPS,
//! naive DR), the future-value estimators (OPFV and its extension), the
//! Prognosticator forecasts, and the DM / SNIPS / SNDR evaluators.

mod prognosticator;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use prognosticator::{
    forecast_delta, fourier_features, period_of, prognosticator, prognosticator_phi,
    prognosticator_phi_weights, prognosticator_weights, Inner,
};

use crate::env::{LoggedDataset, LoggedRecord};
use crate::error::{Error, Result};
use crate::policy::{check_len, Policy};
use crate::reward::RewardPredictor;
use crate::stats;
use crate::timefeat::{TimeDistribution, TimeFeatureFn, Timestamp};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Smallest and largest action importance weight `pi_e / pi_0`.
    pub min_weight: f64,
    pub max_weight: f64,
    /// Fraction of records sharing the target's time feature.
    pub indicator_fraction: Option<f64>,
    /// `p(phi(t'))` used for the time weight.
    pub p_phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub value: f64,
    /// Per-record contributions; their mean is `value`.
    pub per_sample_terms: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    fn from_terms(
        terms: Vec<f64>,
        weights: &[f64],
        indicator_fraction: Option<f64>,
        p_phi: Option<f64>,
    ) -> Self {
        let (min_weight, max_weight) = weights
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            });
        Self {
            value: stats::mean(&terms),
            per_sample_terms: Some(terms),
            diagnostics: Diagnostics {
                min_weight,
                max_weight,
                indicator_fraction,
                p_phi,
            },
        }
    }

    /// Sample variance of the per-record terms divided by `n`.
    pub fn variance_of_mean(&self) -> Result<f64> {
        let terms = self.per_sample_terms.as_ref().ok_or_else(|| {
            Error::InsufficientData("estimate carries no per-sample terms".into())
        })?;
        if terms.len() < 2 {
            return Err(Error::InsufficientData(
                "variance needs at least two records".into(),
            ));
        }
        Ok(stats::sample_variance(terms) / terms.len() as f64)
    }
}

struct Scratch {
    pi: Vec<f64>,
    f: Vec<f64>,
}

/// One output per record, computed in parallel and returned in record order.
fn per_record<T, F>(data: &LoggedDataset, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&LoggedRecord, &mut Scratch) -> Result<T> + Sync + Send,
{
    let n_a = data.n_actions();
    data.records()
        .par_iter()
        .map_init(
            || Scratch {
                pi: vec![0.0; n_a],
                f: vec![0.0; n_a],
            },
            |s, rec| f(rec, s),
        )
        .collect()
}

fn unzip_terms(rows: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    rows.into_iter().unzip()
}

/// Inverse propensity scoring with `pi_e` evaluated at the logged times.
pub fn ips(data: &LoggedDataset, pi_e: &dyn Policy) -> Result<EstimateResult> {
    check_len(pi_e, data.n_actions())?;
    let rows = per_record(data, |rec, s| {
        pi_e.probs_into(&rec.x, rec.t, &mut s.pi)?;
        let w = s.pi[rec.a] / rec.pscore;
        Ok((w * rec.r, w))
    })?;
    let (terms, weights) = unzip_terms(rows);
    Ok(EstimateResult::from_terms(terms, &weights, None, None))
}

/// Doubly robust estimator that assumes stationarity: `pi_e` and `f` are
/// evaluated at each record's logged time.
pub fn dr_naive(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    f_hat: &dyn RewardPredictor,
) -> Result<EstimateResult> {
    check_len(pi_e, data.n_actions())?;
    let rows = per_record(data, |rec, s| {
        pi_e.probs_into(&rec.x, rec.t, &mut s.pi)?;
        f_hat.predict_all(&rec.x, rec.t, &mut s.f)?;
        let w = s.pi[rec.a] / rec.pscore;
        Ok((w * (rec.r - s.f[rec.a]) + stats::dot(&s.pi, &s.f), w))
    })?;
    let (terms, weights) = unzip_terms(rows);
    Ok(EstimateResult::from_terms(terms, &weights, None, None))
}

/// OPFV: records sharing the target's time feature are reweighted by
/// `1 / p(phi(t'))`, `pi_e` is evaluated at `t'`, and the model term
/// predicts at `t'`.
pub fn opfv(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    t_prime: Timestamp,
    phi: &TimeFeatureFn,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<EstimateResult> {
    check_len(pi_e, data.n_actions())?;
    let p_phi = phi.marginal_prob(t_prime, pt)?;
    let target = phi.feature_of(t_prime)?;
    let rows = per_record(data, |rec, s| {
        let hit = phi.feature_of(rec.t)? == target;
        pi_e.probs_into(&rec.x, t_prime, &mut s.pi)?;
        let w = s.pi[rec.a] / rec.pscore;
        f_hat.predict_all(&rec.x, t_prime, &mut s.f)?;
        let mut term = stats::dot(&s.pi, &s.f);
        if hit {
            let f_logged = f_hat.predict(&rec.x, rec.t, rec.a)?;
            term += w * (rec.r - f_logged) / p_phi;
        }
        Ok((term, w, hit))
    })?;
    let hits = rows.iter().filter(|r| r.2).count();
    let (terms, weights): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|(t, w, _)| (t, w)).unzip();
    Ok(EstimateResult::from_terms(
        terms,
        &weights,
        Some(hits as f64 / data.len() as f64),
        Some(p_phi),
    ))
}

/// OPFV for non-stationary contexts: the correction term uses the joint
/// feature `phi_x (x) phi_r` and the model term is reweighted by `phi_x`.
pub fn opfv_extended(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    t_prime: Timestamp,
    phi_x: &TimeFeatureFn,
    phi_r: &TimeFeatureFn,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<EstimateResult> {
    check_len(pi_e, data.n_actions())?;
    let phi_xr = phi_x.product(phi_r)?;
    let p_xr = phi_xr.marginal_prob(t_prime, pt)?;
    let p_x = phi_x.marginal_prob(t_prime, pt)?;
    let target_xr = phi_xr.feature_of(t_prime)?;
    let target_x = phi_x.feature_of(t_prime)?;
    let rows = per_record(data, |rec, s| {
        let hit_xr = phi_xr.feature_of(rec.t)? == target_xr;
        let hit_x = phi_x.feature_of(rec.t)? == target_x;
        pi_e.probs_into(&rec.x, t_prime, &mut s.pi)?;
        let w = s.pi[rec.a] / rec.pscore;
        let mut term = 0.0;
        if hit_x {
            f_hat.predict_all(&rec.x, t_prime, &mut s.f)?;
            term += stats::dot(&s.pi, &s.f) / p_x;
        }
        if hit_xr {
            let f_logged = f_hat.predict(&rec.x, rec.t, rec.a)?;
            term += w * (rec.r - f_logged) / p_xr;
        }
        Ok((term, w, hit_xr))
    })?;
    let hits = rows.iter().filter(|r| r.2).count();
    let (terms, weights): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|(t, w, _)| (t, w)).unzip();
    Ok(EstimateResult::from_terms(
        terms,
        &weights,
        Some(hits as f64 / data.len() as f64),
        Some(p_xr),
    ))
}

/// Direct method: mean of `sum_a pi(a | x_i, t_i) f(x_i, t_i, a)`.
pub fn dm(data: &LoggedDataset, policy: &dyn Policy, f_hat: &dyn RewardPredictor) -> Result<f64> {
    check_len(policy, data.n_actions())?;
    let terms = per_record(data, |rec, s| {
        policy.probs_into(&rec.x, rec.t, &mut s.pi)?;
        f_hat.predict_all(&rec.x, rec.t, &mut s.f)?;
        Ok(stats::dot(&s.pi, &s.f))
    })?;
    Ok(stats::mean(&terms))
}

fn weight_sum(weights: &[f64]) -> Result<f64> {
    let total = stats::sum(weights.iter().copied());
    if total <= 0.0 {
        return Err(Error::Numeric("importance weights sum to zero".into()));
    }
    Ok(total)
}

/// Self-normalized IPS: `sum w_i r_i / sum w_j`.
pub fn snips(data: &LoggedDataset, policy: &dyn Policy) -> Result<f64> {
    check_len(policy, data.n_actions())?;
    let rows = per_record(data, |rec, s| {
        policy.probs_into(&rec.x, rec.t, &mut s.pi)?;
        let w = s.pi[rec.a] / rec.pscore;
        Ok((w * rec.r, w))
    })?;
    let (num, weights) = unzip_terms(rows);
    Ok(stats::sum(num.iter().copied()) / weight_sum(&weights)?)
}

/// Self-normalized DR: the DM term plus the residual correction normalized
/// by the mean importance weight.
pub fn sndr(data: &LoggedDataset, policy: &dyn Policy, f_hat: &dyn RewardPredictor) -> Result<f64> {
    check_len(policy, data.n_actions())?;
    let rows = per_record(data, |rec, s| {
        policy.probs_into(&rec.x, rec.t, &mut s.pi)?;
        f_hat.predict_all(&rec.x, rec.t, &mut s.f)?;
        let w = s.pi[rec.a] / rec.pscore;
        Ok((stats::dot(&s.pi, &s.f), w * (rec.r - s.f[rec.a]), w))
    })?;
    let n = rows.len() as f64;
    let dm_terms: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let corr: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let weights: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mean_w = weight_sum(&weights)? / n;
    Ok(stats::mean(&dm_terms) + stats::mean(&corr) / mean_w)
}
