//! Data-driven choice of the time feature: minimize the estimated squared
//! bias plus the estimated variance of OPFV over a candidate set.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{opfv, EstimateResult};
use crate::policy::Policy;
use crate::reward::RewardPredictor;
use crate::timefeat::{
    season_ladder, TimeDistribution, TimeFeatureFn, Timestamp, SECONDS_PER_HOUR,
};

/// Candidate time features together with the finest one, which must refine
/// every other candidate.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    candidates: Vec<TimeFeatureFn>,
    finest: usize,
}

impl CandidateSet {
    /// Validates refinement on an hourly grid over the shared domain.
    pub fn new(candidates: Vec<TimeFeatureFn>, finest: usize) -> Result<Self> {
        let fine = candidates
            .get(finest)
            .ok_or_else(|| Error::config("finest candidate index out of range"))?;
        for (i, phi) in candidates.iter().enumerate() {
            if i == finest {
                continue;
            }
            if phi.domain_end() != fine.domain_end() {
                return Err(Error::config(format!(
                    "candidate `{}` has a different domain",
                    phi.id()
                )));
            }
            let mut coarse_of = HashMap::new();
            let mut t = 0;
            while t <= fine.domain_end() {
                let f = fine.feature_of(t)?;
                let c = phi.feature_of(t)?;
                if *coarse_of.entry(f).or_insert(c) != c {
                    return Err(Error::config(format!(
                        "finest candidate `{}` does not refine `{}`",
                        fine.id(),
                        phi.id()
                    )));
                }
                t += SECONDS_PER_HOUR;
            }
        }
        Ok(Self { candidates, finest })
    }

    /// The `n_equal_seasons` ladder with the largest `k` as the finest.
    pub fn ladder(ks: &[u32], domain_end: Timestamp) -> Result<Self> {
        if ks.is_empty() {
            return Err(Error::config("candidate ladder is empty"));
        }
        let finest = ks
            .iter()
            .enumerate()
            .max_by_key(|&(_, k)| *k)
            .map(|(i, _)| i)
            .expect("non-empty");
        Self::new(season_ladder(ks, domain_end)?, finest)
    }

    pub fn candidates(&self) -> &[TimeFeatureFn] {
        &self.candidates
    }

    pub fn finest(&self) -> &TimeFeatureFn {
        &self.candidates[self.finest]
    }
}

/// `opfv(phi) - opfv(phi_inf)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_bias(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    t_prime: Timestamp,
    phi: &TimeFeatureFn,
    phi_inf: &TimeFeatureFn,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<f64> {
    let v = opfv(data, pi_e, t_prime, phi, f_hat, pt)?.value;
    let v_inf = opfv(data, pi_e, t_prime, phi_inf, f_hat, pt)?.value;
    Ok(v - v_inf)
}

/// Sample variance of the OPFV per-record terms divided by `n`.
pub fn estimate_variance(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    t_prime: Timestamp,
    phi: &TimeFeatureFn,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<f64> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(
            "variance estimate needs n >= 2".into(),
        ));
    }
    opfv(data, pi_e, t_prime, phi, f_hat, pt)?.variance_of_mean()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub phi_id: String,
    pub cardinality: usize,
    pub bias_hat: f64,
    pub var_hat: f64,
    pub score: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct TuneResult {
    pub selected: TimeFeatureFn,
    /// Position of the selection in the candidate list.
    pub selected_index: usize,
    /// One row per candidate with time-feature support, in candidate order.
    pub table: Vec<ScoreRow>,
    /// Candidates dropped for lack of time-feature support at `t'`.
    pub excluded: Vec<String>,
}

/// Pick `argmin bias_hat^2 + var_hat`, breaking ties toward the smaller
/// cardinality. One reward model is shared by all candidates.
pub fn tune_phi(
    data: &LoggedDataset,
    pi_e: &dyn Policy,
    t_prime: Timestamp,
    candidates: &CandidateSet,
    f_hat: &dyn RewardPredictor,
    pt: &TimeDistribution,
) -> Result<TuneResult> {
    let fits: Vec<Result<EstimateResult>> = candidates
        .candidates
        .par_iter()
        .map(|phi| opfv(data, pi_e, t_prime, phi, f_hat, pt))
        .collect();
    let finest_id = candidates.finest().id().to_string();
    let reference = match &fits[candidates.finest] {
        Ok(r) => r.value,
        Err(Error::NoTimeFeatureSupport { .. }) => {
            return Err(Error::config(format!(
                "finest candidate `{finest_id}` has no time-feature support at t'={t_prime}"
            )))
        }
        Err(e) => {
            return Err(Error::Numeric(format!(
                "OPFV with `{finest_id}` failed: {e}"
            )))
        }
    };

    let mut table = Vec::new();
    let mut index_of_row = Vec::new();
    let mut excluded = Vec::new();
    for (i, (phi, fit)) in candidates.candidates.iter().zip(fits).enumerate() {
        match fit {
            Ok(res) => {
                let bias_hat = res.value - reference;
                let var_hat = res.variance_of_mean()?;
                table.push(ScoreRow {
                    phi_id: phi.id().to_string(),
                    cardinality: phi.cardinality(),
                    bias_hat,
                    var_hat,
                    score: bias_hat * bias_hat + var_hat,
                    selected: false,
                });
                index_of_row.push(i);
            }
            Err(Error::NoTimeFeatureSupport { .. }) => excluded.push(phi.id().to_string()),
            Err(e) => return Err(e),
        }
    }
    let best = (0..table.len())
        .min_by(|&a, &b| {
            table[a]
                .score
                .total_cmp(&table[b].score)
                .then(table[a].cardinality.cmp(&table[b].cardinality))
                .then(a.cmp(&b))
        })
        .ok_or_else(|| Error::config("every candidate violates time-feature support"))?;
    table[best].selected = true;
    let selected_index = index_of_row[best];
    Ok(TuneResult {
        selected: candidates.candidates[selected_index].clone(),
        selected_index,
        table,
        excluded,
    })
}
