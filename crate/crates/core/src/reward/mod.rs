//! Reward regressors `f(x, t, a)`: ridge-linear direct fits, the two-stage
//! pairwise procedure, and the environment oracle.

mod encoder;
mod pairs;

use std::fmt;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

pub use encoder::{Encoder, EncoderSpec};
pub use pairs::{build_pairwise_dataset, BucketKey, ContextCells, Pair, PairConfig, PairDataset};

use crate::env::{LoggedDataset, SyntheticEnv};
use crate::error::{Error, Result};
use crate::linalg::NormalEquations;
use crate::timefeat::{FeatureSpec, TimeFeatureFn, Timestamp};

/// Anything that predicts the expected reward of `(x, t, a)`.
pub trait RewardPredictor: Send + Sync {
    fn predict(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64>;

    /// Predictions for every action, written into `out`.
    fn predict_all(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        for (a, o) in out.iter_mut().enumerate() {
            *o = self.predict(x, t, a)?;
        }
        Ok(())
    }
}

impl<R: RewardPredictor + ?Sized> RewardPredictor for Arc<R> {
    fn predict(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        (**self).predict(x, t, a)
    }

    fn predict_all(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        (**self).predict_all(x, t, out)
    }
}

type RewardFn = dyn Fn(&[f64], Timestamp, usize) -> f64 + Send + Sync;

/// Reward predictor backed by a closure.
#[derive(Clone)]
pub struct FnReward(Arc<RewardFn>);

impl FnReward {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&[f64], Timestamp, usize) -> f64 + Send + Sync + 'static,
    {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for FnReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnReward")
    }
}

impl RewardPredictor for FnReward {
    fn predict(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        Ok((self.0)(x, t, a))
    }
}

/// Ridge fit settings shared by the direct model and the second stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectConfig {
    /// Ridge penalty on every coefficient except the intercept.
    pub ridge: f64,
    pub encoder: EncoderSpec,
    /// Fall back to the pseudo-inverse when the system is singular.
    pub fallback: bool,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self {
            ridge: 1.0,
            encoder: EncoderSpec::default(),
            fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoStageConfig {
    /// Second-stage fit of the time-feature effect.
    pub g: DirectConfig,
    /// Fine time feature the residual effect is linear in.
    pub residual_phi: FeatureSpec,
    pub h_ridge: f64,
    pub pairs: PairConfig,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            g: DirectConfig::default(),
            residual_phi: FeatureSpec::simple("day_of_week"),
            h_ridge: 1e-3,
            pairs: PairConfig::default(),
        }
    }
}

/// Linear model over an [`Encoder`].
#[derive(Debug, Clone)]
pub struct LinearModel {
    encoder: Encoder,
    weights: Vec<f64>,
    normal_residual: f64,
}

impl LinearModel {
    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Max-norm residual of the penalized normal equations at the solution.
    pub fn normal_residual(&self) -> f64 {
        self.normal_residual
    }

    fn predict_with(
        &self,
        buf: &mut Vec<(usize, f64)>,
        x: &[f64],
        t: Timestamp,
        a: usize,
    ) -> Result<f64> {
        self.encoder.encode(x, t, a, buf)?;
        Ok(buf.iter().map(|&(i, v)| self.weights[i] * v).sum())
    }

    pub fn predict(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        let mut buf = Vec::with_capacity(self.encoder.dim().min(64));
        self.predict_with(&mut buf, x, t, a)
    }
}

/// Residual effect `h(t, a) = theta[phi_f(t)] + theta[phi_f(t), a]`. Context
/// and action main effects cancel in pairwise differences and are omitted.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    phi: TimeFeatureFn,
    n_actions: usize,
    weights: Vec<f64>,
}

impl ResidualModel {
    fn zero(phi: TimeFeatureFn, n_actions: usize) -> Self {
        let dim = phi.cardinality() * (1 + n_actions);
        Self {
            phi,
            n_actions,
            weights: vec![0.0; dim],
        }
    }

    fn coords(&self, t: Timestamp, a: usize) -> Result<[usize; 2]> {
        let c = self.phi.cardinality();
        let f = self.phi.feature_of(t)?;
        Ok([f, c + f * self.n_actions + a])
    }

    pub fn phi(&self) -> &TimeFeatureFn {
        &self.phi
    }

    pub fn value(&self, t: Timestamp, a: usize) -> Result<f64> {
        let [i, j] = self.coords(t, a)?;
        Ok(self.weights[i] + self.weights[j])
    }
}

/// `f = g + h` from the two-stage procedure; `h` is dropped beyond the
/// logging horizon.
#[derive(Debug, Clone)]
pub struct TwoStageModel {
    g: LinearModel,
    h: ResidualModel,
    horizon: Timestamp,
    n_pairs: usize,
}

impl TwoStageModel {
    pub fn g_model(&self) -> &LinearModel {
        &self.g
    }

    pub fn h_model(&self) -> &ResidualModel {
        &self.h
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    pub fn g_part(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        self.g.predict(x, t, a)
    }

    pub fn h_part(&self, _x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        if t > self.horizon {
            // Still validate the domain so out-of-range queries fail loudly.
            self.h.phi.feature_of(t)?;
            return Ok(0.0);
        }
        self.h.value(t, a)
    }
}

/// A fitted reward regressor.
#[derive(Debug, Clone)]
pub enum RewardModel {
    Zero,
    Direct(LinearModel),
    TwoStage(TwoStageModel),
    Oracle(Arc<SyntheticEnv>),
}

impl RewardModel {
    pub fn kind(&self) -> &'static str {
        match self {
            RewardModel::Zero => "zero",
            RewardModel::Direct(_) => "direct",
            RewardModel::TwoStage(_) => "two_stage",
            RewardModel::Oracle(_) => "oracle",
        }
    }
}

impl RewardPredictor for RewardModel {
    fn predict(&self, x: &[f64], t: Timestamp, a: usize) -> Result<f64> {
        match self {
            RewardModel::Zero => Ok(0.0),
            RewardModel::Direct(m) => m.predict(x, t, a),
            RewardModel::TwoStage(m) => Ok(m.g_part(x, t, a)? + m.h_part(x, t, a)?),
            RewardModel::Oracle(env) => env.expected_reward(x, t, a),
        }
    }

    fn predict_all(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        match self {
            RewardModel::Zero => {
                out.fill(0.0);
                Ok(())
            }
            RewardModel::Oracle(env) => {
                out.copy_from_slice(&env.expected_rewards(x, t)?);
                Ok(())
            }
            RewardModel::Direct(m) => {
                let mut buf = Vec::new();
                for (a, o) in out.iter_mut().enumerate() {
                    *o = m.predict_with(&mut buf, x, t, a)?;
                }
                Ok(())
            }
            RewardModel::TwoStage(m) => {
                let mut buf = Vec::new();
                for (a, o) in out.iter_mut().enumerate() {
                    *o = m.g.predict_with(&mut buf, x, t, a)? + m.h_part(x, t, a)?;
                }
                Ok(())
            }
        }
    }
}

fn fit_linear(
    data: &LoggedDataset,
    encoder: Encoder,
    config: &DirectConfig,
    target: impl Fn(usize) -> Result<f64>,
) -> Result<LinearModel> {
    if config.ridge < 0.0 || !config.ridge.is_finite() {
        return Err(Error::config(format!(
            "ridge must be finite and >= 0, got {}",
            config.ridge
        )));
    }
    let mut ne = NormalEquations::new(encoder.dim());
    let mut buf = Vec::new();
    for (i, rec) in data.records().iter().enumerate() {
        encoder.encode(&rec.x, rec.t, rec.a, &mut buf)?;
        ne.add_sparse(&buf, target(i)?);
    }
    let w = ne.solve(config.ridge, true, config.fallback)?;
    let normal_residual = ne.residual(&w, config.ridge, true);
    Ok(LinearModel {
        encoder,
        weights: w.iter().copied().collect(),
        normal_residual,
    })
}

/// Ridge regression of `r` on `[1, x, onehot(phi_f(t)), onehot(a), ...]`.
pub fn fit_direct(
    data: &LoggedDataset,
    phi_f: &TimeFeatureFn,
    config: &DirectConfig,
) -> Result<RewardModel> {
    let encoder = Encoder::new(
        phi_f.clone(),
        data.n_actions(),
        data.context_dim(),
        config.encoder,
    );
    let records = data.records();
    Ok(RewardModel::Direct(fit_linear(
        data,
        encoder,
        config,
        |i| Ok(records[i].r),
    )?))
}

/// Two-stage fit: the residual effect from pairwise reward differences within
/// `phi` clusters, then the time-feature effect on `r - h`.
pub fn fit_two_stage(
    data: &LoggedDataset,
    phi: &TimeFeatureFn,
    config: &TwoStageConfig,
) -> Result<RewardModel> {
    let residual_phi = TimeFeatureFn::from_spec(&config.residual_phi, phi.domain_end())?;
    let pairs = build_pairwise_dataset(data, phi, &config.pairs)?;
    let mut h = ResidualModel::zero(residual_phi, data.n_actions());
    if pairs.is_empty() {
        warn!("no pairs share action, time feature and context cell; fitting g with h = 0");
    } else {
        let mut ne = NormalEquations::new(h.weights.len());
        for pair in &pairs.pairs {
            let a = pair.key.action;
            let [pj, qj] = h.coords(pair.t_j, a)?;
            let [pk, qk] = h.coords(pair.t_k, a)?;
            ne.add_sparse(
                &[(pj, 1.0), (qj, 1.0), (pk, -1.0), (qk, -1.0)],
                pair.label(),
            );
        }
        let w = ne.solve(config.h_ridge, false, config.g.fallback)?;
        h.weights = w.iter().copied().collect();
    }
    let encoder = Encoder::new(
        phi.clone(),
        data.n_actions(),
        data.context_dim(),
        config.g.encoder,
    );
    let records = data.records();
    let g = fit_linear(data, encoder, &config.g, |i| {
        let rec = &records[i];
        Ok(rec.r - h.value(rec.t, rec.a)?)
    })?;
    Ok(RewardModel::TwoStage(TwoStageModel {
        g,
        h,
        horizon: data.horizon(),
        n_pairs: pairs.len(),
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    Zero,
    Direct,
    TwoStage,
    Oracle,
}

/// Config block selecting and parameterizing a reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardModelSpec {
    pub kind: RewardKind,
    /// Time feature of a direct model's encoder.
    pub phi: FeatureSpec,
    pub direct: DirectConfig,
    pub two_stage: TwoStageConfig,
}

impl Default for RewardModelSpec {
    fn default() -> Self {
        Self {
            kind: RewardKind::Direct,
            phi: FeatureSpec::simple("day_of_week"),
            direct: DirectConfig::default(),
            two_stage: TwoStageConfig::default(),
        }
    }
}

impl RewardModelSpec {
    pub fn of_kind(kind: RewardKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Fit the configured model. `phi` is the estimator's time feature (used
    /// by the two-stage fit); `env` is required for the oracle kind.
    pub fn fit(
        &self,
        data: &LoggedDataset,
        phi: &TimeFeatureFn,
        env: Option<&Arc<SyntheticEnv>>,
    ) -> Result<RewardModel> {
        match self.kind {
            RewardKind::Zero => Ok(RewardModel::Zero),
            RewardKind::Oracle => {
                env.map(|e| RewardModel::Oracle(Arc::clone(e)))
                    .ok_or_else(|| {
                        Error::config("oracle reward model requires a synthetic environment")
                    })
            }
            RewardKind::Direct => {
                let phi_f = TimeFeatureFn::from_spec(&self.phi, phi.domain_end())?;
                fit_direct(data, &phi_f, &self.direct)
            }
            RewardKind::TwoStage => fit_two_stage(data, phi, &self.two_stage),
        }
    }
}

#[cfg(test)]
mod tests;
