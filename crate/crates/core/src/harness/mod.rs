//! Replicated experiments against the synthetic environment's ground truth:
//! F-OPE and F-OPL runs, sweeps, time-feature tuning and report files.
//!
//! A replicate is one (data seed, target time) pair. Baselines that assume
//! stationarity evaluate the policy at the logged timestamps and so give one
//! estimate per seed, which is scored against every target time.

mod config;
mod plot;
mod report;

use std::sync::Arc;

use rayon::prelude::*;

pub use config::{
    apply_override, resolve_phi, EstimatorSpec, Evaluator, ExperimentConfig, HoldoutSpec,
    InnerKind, LearnerSpec, Mode, Seeds, SweepAxis, SweepSpec, TargetGrid, TargetTime, Task,
    TuneSpec,
};
pub use report::{
    aggregate, emit_report, tune_csv, AggRow, ExperimentReport, LongRow, Selection, TuneRow,
};

use crate::env::{EvaluationPolicy, LoggedDataset, SyntheticEnv, DOMAIN_END, LOGGING_END};
use crate::error::{Error, Result};
use crate::estimators::{
    dm, dr_naive, forecast_delta, ips, opfv, opfv_extended, prognosticator, prognosticator_phi,
    sndr, snips, Inner,
};
use crate::policy::{reg_based_policy, train, GradientEstimator, Policy, SoftmaxPolicy};
use crate::reward::{RewardModel, RewardModelSpec, RewardPredictor};
use crate::timefeat::{TimeDistribution, TimeFeatureFn, Timestamp};
use crate::tuning::{tune_phi, CandidateSet};

const HOLDOUT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const VARIANT_MARK: &str = "#d_prime=";

/// Everything shared by the replicates of one sweep value.
struct Cell {
    value: f64,
    env: Arc<SyntheticEnv>,
    targets: Vec<Timestamp>,
    /// Ground truth per target: the value of `pi_e`, or of the greedy oracle
    /// policy for learning runs.
    truths: Vec<f64>,
    n: usize,
    phi_cardinality: Option<u32>,
}

fn worker_count(config: &ExperimentConfig) -> Result<Option<usize>> {
    match std::env::var("OPFV_NUM_WORKERS") {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| {
                Error::config(format!(
                    "OPFV_NUM_WORKERS must be a positive integer, got `{v}`"
                ))
            })?;
            if n == 0 {
                return Err(Error::config("OPFV_NUM_WORKERS must be >= 1"));
            }
            Ok(Some(n))
        }
        Err(_) => Ok(config.workers),
    }
}

fn with_pool<T: Send>(
    config: &ExperimentConfig,
    f: impl FnOnce() -> Result<T> + Send,
) -> Result<T> {
    match worker_count(config)? {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numeric(format!("cannot start worker pool: {e}")))?
            .install(f),
    }
}

fn logging_window() -> TimeDistribution {
    TimeDistribution::Uniform {
        start: 0,
        end: LOGGING_END,
    }
}

fn constant_phi() -> TimeFeatureFn {
    TimeFeatureFn::constant(DOMAIN_END)
}

/// Run whatever `config.mode` asks for.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    match config.mode {
        Mode::Tune => run_tune(config),
        _ => match config.task() {
            Task::Fope => run_fope(config),
            Task::Fopl => run_fopl(config),
        },
    }
}

fn sweep_points(config: &ExperimentConfig) -> (String, Option<SweepAxis>, Vec<f64>) {
    match &config.sweep {
        Some(s) => (s.axis.name().to_string(), Some(s.axis), s.values.clone()),
        None => ("none".to_string(), None, vec![0.0]),
    }
}

fn build_cells(config: &ExperimentConfig, greedy_truth: bool) -> Result<Vec<Cell>> {
    let (_, axis, values) = sweep_points(config);
    values
        .into_iter()
        .map(|value| {
            let env = config.build_env(axis, value)?;
            let targets = config.targets(value);
            let policy = EvaluationPolicy {
                env: Arc::clone(&env),
                epsilon: if greedy_truth {
                    0.0
                } else {
                    env.config().epsilon
                },
            };
            let truths = targets
                .par_iter()
                .map(|&t| {
                    Ok(env
                        .true_policy_value(&policy, t, config.n_mc, config.oracle_seed)?
                        .mean)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Cell {
                value,
                env,
                targets,
                truths,
                n: config.sample_size(value),
                phi_cardinality: (axis == Some(SweepAxis::PhiCardinality)).then_some(value as u32),
            })
        })
        .collect()
}

fn finish(
    config: &ExperimentConfig,
    long: Vec<LongRow>,
    prefer_high: bool,
    tune: Vec<TuneRow>,
) -> Result<ExperimentReport> {
    let (long, selections) = collapse_variants(long, prefer_high);
    Ok(ExperimentReport {
        config: config.clone(),
        resolved_env: config.resolved_env()?,
        agg: aggregate(&long),
        long,
        tune,
        selections,
    })
}

/// Replace the `d_prime` variants of a method by one row per replicate: the
/// variant closest to the true value, or the one with the highest value
/// when `prefer_high`. Selections count how often each variant won.
fn collapse_variants(long: Vec<LongRow>, prefer_high: bool) -> (Vec<LongRow>, Vec<Selection>) {
    let mut out: Vec<LongRow> = Vec::with_capacity(long.len());
    let mut wins: Vec<(String, f64, Vec<(String, usize)>)> = Vec::new();
    let score = |r: &LongRow| match r.estimate {
        None => f64::INFINITY,
        Some(e) if prefer_high => -e,
        Some(e) => (e - r.true_value).abs(),
    };
    let mut i = 0;
    while i < long.len() {
        let Some((base, _)) = long[i].method.split_once(VARIANT_MARK) else {
            out.push(long[i].clone());
            i += 1;
            continue;
        };
        let base = base.to_string();
        let mut j = i;
        let same_replicate = |r: &LongRow| {
            r.method.split_once(VARIANT_MARK).map(|p| p.0) == Some(base.as_str())
                && r.seed == long[i].seed
                && r.target == long[i].target
                && r.sweep_value == long[i].sweep_value
        };
        while j < long.len() && same_replicate(&long[j]) {
            j += 1;
        }
        let group = &long[i..j];
        let best = group
            .iter()
            .min_by(|a, b| score(a).total_cmp(&score(b)))
            .expect("non-empty group");
        let choice = best
            .method
            .split_once(VARIANT_MARK)
            .expect("variant")
            .1
            .to_string();
        if best.estimate.is_some() {
            let entry = match wins
                .iter()
                .position(|(m, v, _)| *m == base && *v == best.sweep_value)
            {
                Some(p) => &mut wins[p].2,
                None => {
                    wins.push((base.clone(), best.sweep_value, Vec::new()));
                    &mut wins.last_mut().expect("just pushed").2
                }
            };
            match entry.iter_mut().find(|(c, _)| *c == choice) {
                Some((_, n)) => *n += 1,
                None => entry.push((choice, 1)),
            }
        }
        out.push(LongRow {
            method: base,
            ..best.clone()
        });
        i = j;
    }
    let selections = wins
        .into_iter()
        .map(|(method, sweep_value, mut counts)| {
            counts.sort_by(|a, b| a.0.parse::<usize>().ok().cmp(&b.0.parse::<usize>().ok()));
            let choice = counts
                .iter()
                .map(|(c, n)| format!("d_prime={c}:{n}"))
                .collect::<Vec<_>>()
                .join(" ");
            Selection {
                method,
                sweep_value,
                choice,
            }
        })
        .collect();
    (out, selections)
}

fn grid<F>(cells: &[Cell], seeds: &[u64], f: F) -> Result<Vec<LongRow>>
where
    F: Fn(&Cell, u64) -> Result<Vec<LongRow>> + Sync,
{
    let tasks: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let rows: Vec<Vec<LongRow>> = tasks
        .par_iter()
        .map(|&(c, s)| f(&cells[c], s))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Builds the long rows of one (cell, seed) replicate set.
struct Rows<'a> {
    axis: &'a str,
    cell: &'a Cell,
    seed: u64,
    rows: Vec<LongRow>,
}

impl Rows<'_> {
    fn push(&mut self, method: &str, target: usize, outcome: &Result<f64>) {
        let (estimate, error) = match outcome {
            Ok(v) if v.is_finite() => (Some(*v), None),
            Ok(v) => (None, Some(format!("non-finite estimate {v}"))),
            Err(e) => (None, Some(e.to_string())),
        };
        self.rows.push(LongRow {
            sweep_axis: self.axis.to_string(),
            sweep_value: self.cell.value,
            method: method.to_string(),
            seed: self.seed,
            target: self.cell.targets[target],
            estimate,
            true_value: self.cell.truths[target],
            error,
        });
    }

    fn push_with_truth(&mut self, method: &str, target: usize, outcome: &Result<f64>, truth: f64) {
        self.push(method, target, outcome);
        self.rows.last_mut().expect("just pushed").true_value = truth;
    }
}

fn fit_reward(
    spec: &RewardModelSpec,
    data: &LoggedDataset,
    phi: &TimeFeatureFn,
    env: &Arc<SyntheticEnv>,
) -> Result<RewardModel> {
    spec.fit(data, phi, Some(env))
}

fn inner(kind: InnerKind, model: &RewardModel) -> Inner<'_> {
    match kind {
        InnerKind::Ips => Inner::Ips,
        InnerKind::Dr => Inner::Dr(model),
    }
}

fn shared<T>(r: &Result<T>) -> Result<&T> {
    r.as_ref().map_err(|e| match e {
        Error::Config(m) => Error::Config(m.clone()),
        other => Error::Numeric(other.to_string()),
    })
}

/// Replicated off-policy evaluation. Every configured estimator is scored
/// against the Monte Carlo value of the evaluation policy at each target.
pub fn run_fope(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    with_pool(config, || {
        let cells = build_cells(config, false)?;
        let (axis, _, _) = sweep_points(config);
        let seeds = config.seeds.list();
        let long = grid(&cells, &seeds, |cell, seed| {
            fope_replicate(config, &axis, cell, seed)
        })?;
        finish(config, long, false, Vec::new())
    })
}

fn fope_replicate(
    config: &ExperimentConfig,
    axis: &str,
    cell: &Cell,
    seed: u64,
) -> Result<Vec<LongRow>> {
    let data = cell.env.sample_logged_data(cell.n, seed)?;
    let mut rows = Rows {
        axis,
        cell,
        seed,
        rows: Vec::new(),
    };
    for spec in &config.estimators {
        fope_estimator(spec, cell, &data, &mut rows);
    }
    Ok(rows.rows)
}

fn fope_estimator(spec: &EstimatorSpec, cell: &Cell, data: &LoggedDataset, rows: &mut Rows<'_>) {
    let env = &cell.env;
    let pi_e = EvaluationPolicy::new(Arc::clone(env));
    let pt = logging_window();
    let true_seasons = env.config().true_seasons;
    let label = spec.label();
    let n_targets = cell.targets.len();
    let stationary = |rows: &mut Rows<'_>, outcome: Result<f64>| {
        for j in 0..n_targets {
            rows.push(&label, j, &outcome);
        }
    };
    match spec {
        EstimatorSpec::Ips { .. } => stationary(rows, ips(data, &pi_e).map(|r| r.value)),
        EstimatorSpec::Snips { .. } => stationary(rows, snips(data, &pi_e)),
        EstimatorSpec::Dr { reward, .. } => stationary(
            rows,
            fit_reward(reward, data, &constant_phi(), env)
                .and_then(|m| Ok(dr_naive(data, &pi_e, &m)?.value)),
        ),
        EstimatorSpec::Dm { reward, .. } => stationary(
            rows,
            fit_reward(reward, data, &constant_phi(), env).and_then(|m| dm(data, &pi_e, &m)),
        ),
        EstimatorSpec::Sndr { reward, .. } => stationary(
            rows,
            fit_reward(reward, data, &constant_phi(), env).and_then(|m| sndr(data, &pi_e, &m)),
        ),
        EstimatorSpec::Opfv { phi, reward, .. } => {
            let fitted = match cell.phi_cardinality {
                Some(k) => TimeFeatureFn::seasons(k, DOMAIN_END),
                None => resolve_phi(phi, true_seasons),
            }
            .and_then(|phi| {
                let m = fit_reward(reward, data, &phi, env)?;
                Ok((phi, m))
            });
            for (j, &t) in cell.targets.iter().enumerate() {
                let outcome = shared(&fitted)
                    .and_then(|(phi, m)| Ok(opfv(data, &pi_e, t, phi, m, &pt)?.value));
                rows.push(&label, j, &outcome);
            }
        }
        EstimatorSpec::OpfvTuned { ladder, reward, .. } => {
            let fitted = CandidateSet::ladder(ladder, DOMAIN_END).and_then(|set| {
                let m = fit_reward(reward, data, set.finest(), env)?;
                Ok((set, m))
            });
            for (j, &t) in cell.targets.iter().enumerate() {
                let outcome = shared(&fitted).and_then(|(set, m)| {
                    let tuned = tune_phi(data, &pi_e, t, set, m, &pt)?;
                    Ok(opfv(data, &pi_e, t, &tuned.selected, m, &pt)?.value)
                });
                rows.push(&label, j, &outcome);
            }
        }
        EstimatorSpec::OpfvExtended {
            phi_x,
            phi_r,
            reward,
            ..
        } => {
            let fitted = resolve_phi(phi_x, true_seasons).and_then(|phi_x| {
                let phi_r = resolve_phi(phi_r, true_seasons)?;
                let m = fit_reward(reward, data, &phi_r, env)?;
                Ok((phi_x, phi_r, m))
            });
            for (j, &t) in cell.targets.iter().enumerate() {
                let outcome = shared(&fitted).and_then(|(phi_x, phi_r, m)| {
                    Ok(opfv_extended(data, &pi_e, t, phi_x, phi_r, m, &pt)?.value)
                });
                rows.push(&label, j, &outcome);
            }
        }
        EstimatorSpec::Prognosticator {
            k,
            d_prime,
            inner: kind,
            reward,
            ..
        } => {
            let model = fit_reward(reward, data, &constant_phi(), env);
            for (j, &t) in cell.targets.iter().enumerate() {
                for &d in d_prime {
                    let method = if d_prime.len() > 1 {
                        format!("{label}{VARIANT_MARK}{d}")
                    } else {
                        label.clone()
                    };
                    let outcome = shared(&model).and_then(|m| {
                        let delta = forecast_delta(t, data.horizon(), *k)?;
                        Ok(prognosticator(data, &pi_e, *k, delta, d, inner(*kind, m))?.value)
                    });
                    rows.push(&method, j, &outcome);
                }
            }
        }
        EstimatorSpec::PrognosticatorPhi {
            k,
            cycle,
            inner: kind,
            reward,
            ..
        } => {
            let model = fit_reward(reward, data, &constant_phi(), env);
            let cycle = cycle.unwrap_or(*k);
            let phi_p = move |p: usize| (p - 1) % cycle;
            for (j, &t) in cell.targets.iter().enumerate() {
                let outcome = shared(&model).and_then(|m| {
                    let delta = forecast_delta(t, data.horizon(), *k)?;
                    Ok(prognosticator_phi(data, &pi_e, &phi_p, *k, delta, inner(*kind, m))?.value)
                });
                rows.push(&label, j, &outcome);
            }
        }
    }
}

/// Replicated off-policy learning. Each learner is trained per replicate and
/// its learned policy is valued by Monte Carlo at the target time; the
/// reference `true_value` is the value of the greedy oracle policy.
pub fn run_fopl(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    with_pool(config, || {
        let cells = build_cells(config, true)?;
        let (axis, _, _) = sweep_points(config);
        let seeds = config.seeds.list();
        let long = grid(&cells, &seeds, |cell, seed| {
            fopl_replicate(config, &axis, cell, seed)
        })?;
        finish(config, long, true, Vec::new())
    })
}

fn fopl_replicate(
    config: &ExperimentConfig,
    axis: &str,
    cell: &Cell,
    seed: u64,
) -> Result<Vec<LongRow>> {
    let env = &cell.env;
    let data = env.sample_logged_data(cell.n, seed)?;
    let mut rows = Rows {
        axis,
        cell,
        seed,
        rows: Vec::new(),
    };
    for spec in &config.learners {
        let label = spec.label();
        let variants: Vec<(String, Option<usize>)> = match spec {
            LearnerSpec::PrognosticatorPg { d_prime, .. } if d_prime.len() > 1 => d_prime
                .iter()
                .map(|&d| (format!("{label}{VARIANT_MARK}{d}"), Some(d)))
                .collect(),
            LearnerSpec::PrognosticatorPg { d_prime, .. } => {
                vec![(label.clone(), d_prime.first().copied())]
            }
            _ => vec![(label.clone(), None)],
        };
        // Learners that ignore the target time are trained once per seed.
        let mut untimed: Vec<Option<Result<Arc<dyn Policy>>>> =
            variants.iter().map(|_| None).collect();
        for (j, &t) in cell.targets.iter().enumerate() {
            for (v, (method, d_prime)) in variants.iter().enumerate() {
                let learned = if depends_on_target(spec) {
                    learn(config, spec, *d_prime, env, &data, t, seed)
                } else {
                    let slot = untimed[v]
                        .get_or_insert_with(|| learn(config, spec, *d_prime, env, &data, t, seed));
                    shared(slot).cloned()
                };
                let value = shared(&learned).and_then(|p| {
                    Ok(env
                        .true_policy_value(p.as_ref(), t, config.n_mc, config.oracle_seed)?
                        .mean)
                });
                rows.push(method, j, &value);
                if let (Some(h), Ok(p), Ok(value)) = (&config.holdout, &learned, &value) {
                    for (name, est) in holdout_scores(h, env, p.as_ref(), t, seed) {
                        rows.push_with_truth(&format!("{method}/{name}"), j, &est, *value);
                    }
                }
            }
        }
    }
    Ok(rows.rows)
}

fn depends_on_target(spec: &LearnerSpec) -> bool {
    matches!(
        spec,
        LearnerSpec::OpfvPg { .. } | LearnerSpec::PrognosticatorPg { .. }
    )
}

/// DM, SNIPS and SNDR scores of `policy` on fresh data logged at `t`.
fn holdout_scores(
    spec: &HoldoutSpec,
    env: &Arc<SyntheticEnv>,
    policy: &dyn Policy,
    t: Timestamp,
    seed: u64,
) -> Vec<(&'static str, Result<f64>)> {
    let data = TimeDistribution::empirical(vec![t])
        .and_then(|pt| env.sample_logged_data_with(spec.n, seed ^ HOLDOUT_SALT, &pt));
    let model = data
        .as_ref()
        .map_err(|e| Error::Numeric(e.to_string()))
        .and_then(|d| fit_reward(&spec.reward, d, &constant_phi(), env));
    spec.evaluators
        .iter()
        .map(|ev| {
            let est = shared(&data).and_then(|d| match ev {
                Evaluator::Snips => snips(d, policy),
                Evaluator::Dm => dm(d, policy, shared(&model)?),
                Evaluator::Sndr => sndr(d, policy, shared(&model)?),
            });
            (ev.name(), est)
        })
        .collect()
}

fn learn(
    config: &ExperimentConfig,
    spec: &LearnerSpec,
    d_prime: Option<usize>,
    env: &Arc<SyntheticEnv>,
    data: &LoggedDataset,
    t_prime: Timestamp,
    seed: u64,
) -> Result<Arc<dyn Policy>> {
    let true_seasons = env.config().true_seasons;
    let estimator = match spec {
        LearnerSpec::RegBased {
            reward,
            beta,
            t_ref,
            ..
        } => {
            let model: Arc<dyn RewardPredictor> =
                Arc::new(fit_reward(reward, data, &constant_phi(), env)?);
            let policy = reg_based_policy(
                model,
                *beta,
                t_ref.unwrap_or(data.horizon()),
                data.n_actions(),
            )?;
            return Ok(Arc::new(policy));
        }
        LearnerSpec::OpfvPg { phi, reward, .. } => {
            let phi = resolve_phi(phi, true_seasons)?;
            let model = fit_reward(reward, data, &phi, env)?;
            GradientEstimator::Opfv {
                t_prime,
                phi,
                reward: Arc::new(model),
                pt: logging_window(),
            }
        }
        LearnerSpec::IpsPg { .. } => GradientEstimator::Ips,
        LearnerSpec::DrPg { reward, .. } => GradientEstimator::Dr {
            reward: Arc::new(fit_reward(reward, data, &constant_phi(), env)?),
        },
        LearnerSpec::PrognosticatorPg { k, .. } => GradientEstimator::Prognosticator {
            k: *k,
            delta: forecast_delta(t_prime, data.horizon(), *k)?,
            d_prime: d_prime
                .ok_or_else(|| Error::config("Prognosticator needs at least one d_prime"))?,
        },
    };
    let initial = SoftmaxPolicy::init(config.policy, data.n_actions(), data.context_dim(), seed);
    let train_config = crate::policy::TrainConfig {
        seed,
        ..config.train.clone()
    };
    let out = train(data, &initial, &estimator, &train_config, None)?;
    Ok(Arc::new(out.policy))
}

/// Time-feature tuning on one dataset per seed and target; the score tables
/// land in `ExperimentReport::tune`.
pub fn run_tune(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    with_pool(config, || {
        let env = config.build_env(None, 0.0)?;
        let set = CandidateSet::ladder(&config.tune.ladder, DOMAIN_END)?;
        let pi_e = EvaluationPolicy::new(Arc::clone(&env));
        let targets = config.targets(0.0);
        let tables: Vec<Vec<TuneRow>> = config
            .seeds
            .list()
            .par_iter()
            .map(|&seed| {
                let data = env.sample_logged_data(config.n, seed)?;
                let model = fit_reward(&config.tune.reward, &data, set.finest(), &env)?;
                let mut rows = Vec::new();
                for &t in &targets {
                    let res = tune_phi(&data, &pi_e, t, &set, &model, &logging_window())?;
                    rows.extend(res.table.into_iter().map(|r| TuneRow {
                        seed,
                        target: t,
                        phi_id: r.phi_id,
                        cardinality: r.cardinality,
                        bias_hat: r.bias_hat,
                        var_hat: r.var_hat,
                        score: r.score,
                        selected: r.selected,
                    }));
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        finish(
            config,
            Vec::new(),
            false,
            tables.into_iter().flatten().collect(),
        )
    })
}
