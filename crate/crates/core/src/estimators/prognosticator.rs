use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{dr_naive, ips, Diagnostics, EstimateResult};
use crate::env::LoggedDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::Policy;
use crate::reward::RewardPredictor;
use crate::timefeat::Timestamp;

/// Per-period estimator used inside the Prognosticator.
#[derive(Clone, Copy)]
pub enum Inner<'a> {
    Ips,
    Dr(&'a dyn RewardPredictor),
}

/// Zero-based period of `t` when `[0, horizon]` is cut into `k` equal slices.
/// Times past the horizon continue the same grid.
pub fn period_of(t: Timestamp, horizon: Timestamp, k: usize) -> usize {
    let span = horizon as i128 + 1;
    (t as i128 * k as i128 / span) as usize
}

/// `delta` such that `t'` falls in the one-based period `K + delta`.
pub fn forecast_delta(t_prime: Timestamp, horizon: Timestamp, k: usize) -> Result<usize> {
    let period = period_of(t_prime, horizon, k) + 1;
    if period <= k {
        return Err(Error::config(format!(
            "target time {t_prime} lies inside the logging window; forecasts need t' > {horizon}"
        )));
    }
    Ok(period - k)
}

/// Fourier basis `(sin(2 pi j k / (K + delta)))_j, 1, (cos(2 pi j k / (K + delta)))_j`.
pub fn fourier_features(period: usize, k: usize, delta: usize, d_prime: usize) -> Vec<f64> {
    let denom = (k + delta) as f64;
    let angle = |j: usize| 2.0 * PI * (j * period) as f64 / denom;
    let mut v: Vec<f64> = (1..=d_prime).map(|j| angle(j).sin()).collect();
    v.push(1.0);
    v.extend((1..=d_prime).map(|j| angle(j).cos()));
    v
}

/// Weights `c = psi(K + delta)^T (Psi^T Psi)^+ Psi^T` mapping per-period
/// estimates to the forecast.
pub fn prognosticator_weights(k: usize, delta: usize, d_prime: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::config("Prognosticator needs K >= 1"));
    }
    let width = 2 * d_prime + 1;
    let rows: Vec<f64> = (1..=k)
        .flat_map(|p| fourier_features(p, k, delta, d_prime))
        .collect();
    let design = DMatrix::from_row_slice(k, width, &rows);
    let target = DVector::from_vec(fourier_features(k + delta, k, delta, d_prime));
    Ok(linalg::hat_row(&design, &target)?.iter().copied().collect())
}

/// One-hot regression weights over periods for a period feature map.
fn onehot_weights(phi_p: &dyn Fn(usize) -> usize, k: usize, delta: usize) -> Result<Vec<f64>> {
    let features: Vec<usize> = (1..=k).map(phi_p).collect();
    let target = phi_p(k + delta);
    if !features.contains(&target) {
        return Err(Error::UnobservedPeriodFeature { feature: target, k });
    }
    let card = features.iter().copied().max().unwrap_or(0).max(target) + 1;
    let mut design = DMatrix::zeros(k, card);
    for (row, &f) in features.iter().enumerate() {
        design[(row, f)] = 1.0;
    }
    let mut v = DVector::zeros(card);
    v[target] = 1.0;
    Ok(linalg::hat_row(&design, &v)?.iter().copied().collect())
}

fn slices(data: &LoggedDataset, k: usize) -> Result<Vec<LoggedDataset>> {
    let horizon = data.horizon();
    (0..k)
        .map(|s| {
            data.subset(|r| period_of(r.t, horizon, k) == s)
                .ok_or(Error::EmptySlice { slice: s + 1, k })
        })
        .collect()
}

fn forecast(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    k: usize,
    weights: &[f64],
    inner: Inner<'_>,
) -> Result<EstimateResult> {
    let n = data.len() as f64;
    let horizon = data.horizon();
    let parts = slices(data, k)?;
    let mut per_period = Vec::with_capacity(k);
    for part in &parts {
        per_period.push(match inner {
            Inner::Ips => ips(part, pi_e)?,
            Inner::Dr(f) => dr_naive(part, pi_e, f)?,
        });
    }
    let slice_terms: Vec<&[f64]> = per_period
        .iter()
        .map(|r| r.per_sample_terms.as_deref().unwrap_or_default())
        .collect();
    let mut cursor = vec![0usize; k];
    // Record i contributes n * c_k * z_i / n_k so the terms average to the forecast.
    let terms: Vec<f64> = data
        .records()
        .iter()
        .map(|r| {
            let s = period_of(r.t, horizon, k);
            let z = slice_terms[s][cursor[s]];
            cursor[s] += 1;
            n * weights[s] * z / parts[s].len() as f64
        })
        .collect();
    let value = weights
        .iter()
        .zip(&per_period)
        .map(|(c, r)| c * r.value)
        .sum();
    let (lo, hi) = per_period
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (
                lo.min(r.diagnostics.min_weight),
                hi.max(r.diagnostics.max_weight),
            )
        });
    Ok(EstimateResult {
        value,
        per_sample_terms: Some(terms),
        diagnostics: Diagnostics {
            min_weight: lo,
            max_weight: hi,
            indicator_fraction: None,
            p_phi: None,
        },
    })
}

/// Prognosticator: per-period estimates on `K` equal slices of the logging
/// window, extrapolated to period `K + delta` by least squares on a Fourier
/// basis of the period index.
pub fn prognosticator(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    k: usize,
    delta: usize,
    d_prime: usize,
    inner: Inner<'_>,
) -> Result<EstimateResult> {
    let weights = prognosticator_weights(k, delta, d_prime)?;
    forecast(data, pi_e, k, &weights, inner)
}

/// Prognosticator with a one-hot design over a period feature map `phi_p`
/// (one-based period index to feature), i.e. the mean of the per-period
/// estimates whose feature matches period `K + delta`.
pub fn prognosticator_phi(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    phi_p: &dyn Fn(usize) -> usize,
    k: usize,
    delta: usize,
    inner: Inner<'_>,
) -> Result<EstimateResult> {
    if k == 0 {
        return Err(Error::config("Prognosticator needs K >= 1"));
    }
    let weights = onehot_weights(phi_p, k, delta)?;
    forecast(data, pi_e, k, &weights, inner)
}

/// Regression weights of the one-hot period design.
pub fn prognosticator_phi_weights(
    phi_p: &dyn Fn(usize) -> usize,
    k: usize,
    delta: usize,
) -> Result<Vec<f64>> {
    onehot_weights(phi_p, k, delta)
}
