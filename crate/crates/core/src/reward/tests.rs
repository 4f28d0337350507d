use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::*;
use crate::env::{make_env, DatasetMeta, LoggedRecord, DOMAIN_END};
use crate::stats;
use crate::timefeat::{day_start, SECONDS_PER_YEAR};

fn small_env(overrides: serde_json::Value) -> Arc<SyntheticEnv> {
    Arc::new(make_env(5, &overrides).unwrap())
}

fn dow() -> TimeFeatureFn {
    TimeFeatureFn::day_of_week(DOMAIN_END)
}

fn seasons8() -> TimeFeatureFn {
    TimeFeatureFn::seasons(8, DOMAIN_END).unwrap()
}

fn relabel(data: &LoggedDataset, mut f: impl FnMut(usize, &LoggedRecord) -> f64) -> LoggedDataset {
    let records = data
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| LoggedRecord {
            r: f(i, r),
            ..r.clone()
        })
        .collect();
    LoggedDataset::new(records, data.meta().clone()).unwrap()
}

#[test]
fn exactly_linear_rewards_are_interpolated() {
    let env = small_env(json!({"n_actions": 4, "context_dim": 3}));
    let data = env.sample_logged_data(400, 1).unwrap();
    let encoder = Encoder::new(dow(), 4, 3, EncoderSpec::default());
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let w: Vec<f64> = (0..encoder.dim())
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let mut buf = Vec::new();
    let data = relabel(&data, |_, r| {
        encoder.encode(&r.x, r.t, r.a, &mut buf).unwrap();
        buf.iter().map(|&(i, v)| w[i] * v).sum()
    });
    let config = DirectConfig {
        ridge: 0.0,
        ..DirectConfig::default()
    };
    let model = fit_direct(&data, &dow(), &config).unwrap();
    for rec in data.records() {
        assert!((model.predict(&rec.x, rec.t, rec.a).unwrap() - rec.r).abs() < 1e-8);
    }
}

#[test]
fn constant_rewards_give_constant_predictions() {
    let env = small_env(json!({}));
    let data = relabel(&env.sample_logged_data(300, 2).unwrap(), |_, _| 2.5);
    let model = fit_direct(&data, &dow(), &DirectConfig::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let t = rng.random_range(0..=DOMAIN_END);
        let a = rng.random_range(0..10);
        assert!((model.predict(&x, t, a).unwrap() - 2.5).abs() < 1e-8);
    }
}

#[test]
fn huge_ridge_shrinks_to_the_mean() {
    let env = small_env(json!({}));
    let data = env.sample_logged_data(500, 3).unwrap();
    let mean = stats::mean(&data.records().iter().map(|r| r.r).collect::<Vec<_>>());
    let config = DirectConfig {
        ridge: 1e9,
        ..DirectConfig::default()
    };
    let model = fit_direct(&data, &dow(), &config).unwrap();
    for rec in data.records().iter().take(50) {
        assert!((model.predict(&rec.x, rec.t, rec.a).unwrap() - mean).abs() < 1e-3);
    }
}

#[test]
fn ridge_solutions_satisfy_normal_equations() {
    let env = small_env(json!({}));
    let data = env.sample_logged_data(1000, 4).unwrap();
    for ridge in [0.0, 1e-6, 1.0, 100.0] {
        let config = DirectConfig {
            ridge,
            ..DirectConfig::default()
        };
        for phi in [dow(), TimeFeatureFn::constant(DOMAIN_END), seasons8()] {
            let RewardModel::Direct(m) = fit_direct(&data, &phi, &config).unwrap() else {
                unreachable!()
            };
            assert!(
                m.normal_residual() < 1e-8,
                "ridge {ridge}: {}",
                m.normal_residual()
            );
        }
    }
}

#[test]
fn zero_and_oracle_kinds() {
    let env = small_env(json!({}));
    let zero = RewardModel::Zero;
    let oracle = RewardModel::Oracle(Arc::clone(&env));
    let x = vec![0.3; 10];
    let t = day_start(1, 40);
    for a in 0..10 {
        assert_eq!(zero.predict(&x, t, a).unwrap(), 0.0);
        assert_eq!(
            oracle.predict(&x, t, a).unwrap(),
            env.expected_reward(&x, t, a).unwrap()
        );
    }
    let mut all = vec![0.0; 10];
    oracle.predict_all(&x, t, &mut all).unwrap();
    assert_eq!(all, env.expected_rewards(&x, t).unwrap());
}

#[test]
fn predict_checks_the_domain() {
    let env = small_env(json!({}));
    let data = env.sample_logged_data(100, 1).unwrap();
    let model = fit_direct(&data, &dow(), &DirectConfig::default()).unwrap();
    assert!(matches!(
        model.predict(&[0.0; 10], DOMAIN_END + 1, 0),
        Err(Error::Domain { .. })
    ));
}

fn tiny(records: Vec<(f64, Timestamp, usize, f64)>) -> LoggedDataset {
    let meta = DatasetMeta {
        horizon: SECONDS_PER_YEAR - 1,
        n_actions: 5,
        context_dim: 1,
        env: None,
        data_seed: None,
    };
    let records = records
        .into_iter()
        .map(|(x, t, a, r)| LoggedRecord {
            x: vec![x],
            t,
            a,
            r,
            pscore: 0.2,
        })
        .collect();
    LoggedDataset::new(records, meta).unwrap()
}

#[test]
fn distinct_actions_give_no_pairs() {
    let data = tiny((0..5).map(|a| (0.5, 100, a, 1.0)).collect());
    let pairs = build_pairwise_dataset(&data, &seasons8(), &PairConfig::default()).unwrap();
    assert!(pairs.is_empty());
}

#[test]
fn identical_records_form_one_pair() {
    let data = tiny(vec![(0.5, 100, 2, 3.0), (0.5, 86_400 * 3, 2, 1.25)]);
    let pairs = build_pairwise_dataset(&data, &seasons8(), &PairConfig::default()).unwrap();
    assert_eq!(pairs.len(), 1);
    assert_eq!(pairs.pairs[0].label(), 1.75);
}

fn brute_force_pairs(data: &LoggedDataset, phi: &TimeFeatureFn) -> usize {
    let recs = data.records();
    let mut count = 0;
    for i in 0..recs.len() {
        for j in i + 1..recs.len() {
            let same_cell = recs[i]
                .x
                .iter()
                .zip(&recs[j].x)
                .all(|(a, b)| (*a >= 0.0) == (*b >= 0.0));
            if recs[i].a == recs[j].a && phi.indicator(recs[i].t, recs[j].t).unwrap() && same_cell {
                count += 1;
            }
        }
    }
    count
}

#[test]
fn pair_count_matches_brute_force() {
    let env = small_env(json!({"n_actions": 3, "context_dim": 2}));
    let data = env.sample_logged_data(200, 6).unwrap();
    let phi = TimeFeatureFn::seasons(4, DOMAIN_END).unwrap();
    let pairs = build_pairwise_dataset(&data, &phi, &PairConfig::default()).unwrap();
    let expected = brute_force_pairs(&data, &phi);
    assert!(expected > 100);
    assert_eq!(pairs.len(), expected);
    assert_eq!(pairs.total, expected);
    for p in &pairs.pairs {
        assert!(phi.indicator(p.t_j, p.t_k).unwrap());
        assert_eq!(data.records()[p.j].a, data.records()[p.k].a);
    }
}

#[test]
fn reservoir_caps_the_pair_count() {
    let env = small_env(json!({"n_actions": 2, "context_dim": 2}));
    let data = env.sample_logged_data(300, 7).unwrap();
    let config = PairConfig {
        max_pairs: 50,
        cells: ContextCells::Single,
        seed: 3,
    };
    let pairs = build_pairwise_dataset(&data, &seasons8(), &config).unwrap();
    assert_eq!(pairs.len(), 50);
    assert!(pairs.total > 50);
    let again = build_pairwise_dataset(&data, &seasons8(), &config).unwrap();
    assert_eq!(pairs, again);
}

#[test]
fn quantile_cells_partition_contexts() {
    let env = small_env(json!({"n_actions": 2, "context_dim": 2}));
    let data = env.sample_logged_data(400, 8).unwrap();
    let config = |cells| PairConfig {
        cells,
        ..PairConfig::default()
    };
    let single = build_pairwise_dataset(&data, &seasons8(), &config(ContextCells::Single)).unwrap();
    let q2 = build_pairwise_dataset(
        &data,
        &seasons8(),
        &config(ContextCells::Quantile { bins: 2 }),
    )
    .unwrap();
    let q4 = build_pairwise_dataset(
        &data,
        &seasons8(),
        &config(ContextCells::Quantile { bins: 4 }),
    )
    .unwrap();
    assert!(single.total > q2.total && q2.total > q4.total && q4.total > 0);
}

#[test]
fn empty_pairs_degrade_to_direct_fit() {
    let env = small_env(json!({}));
    let data = env.sample_logged_data(60, 9).unwrap();
    let config = TwoStageConfig::default();
    let pairs = build_pairwise_dataset(&data, &seasons8(), &config.pairs).unwrap();
    assert!(pairs.is_empty());
    let two = fit_two_stage(&data, &seasons8(), &config).unwrap();
    let direct = fit_direct(&data, &seasons8(), &config.g).unwrap();
    for rec in data.records() {
        let (a, b) = (
            two.predict(&rec.x, rec.t, rec.a).unwrap(),
            direct.predict(&rec.x, rec.t, rec.a).unwrap(),
        );
        assert_eq!(a, b);
    }
}

fn fixed_context_env(lambda: f64, sigma: f64) -> Arc<SyntheticEnv> {
    let x = vec![0.4, -0.2, 1.1, 0.7, -0.5, 0.3, 0.9, -1.2, 0.2, 0.6];
    small_env(json!({ "lambda": lambda, "sigma": sigma, "fixed_context": x }))
}

fn two_stage_on(env: &SyntheticEnv, n: usize) -> (LoggedDataset, TwoStageModel) {
    let data = env.sample_logged_data(n, 31).unwrap();
    let RewardModel::TwoStage(m) =
        fit_two_stage(&data, &seasons8(), &TwoStageConfig::default()).unwrap()
    else {
        unreachable!()
    };
    (data, m)
}

#[test]
fn stationary_data_gives_flat_residual_model() {
    let env = fixed_context_env(1.0, 0.1);
    let (data, model) = two_stage_on(&env, 4000);
    assert!(model.n_pairs() > 1000);
    let x = &data.records()[0].x;
    let mut worst: f64 = 0.0;
    for a in 0..10 {
        for d1 in 0..7 {
            for d2 in 0..7 {
                let dh = model.h_part(x, day_start(0, d1), a).unwrap()
                    - model.h_part(x, day_start(0, d2), a).unwrap();
                worst = worst.max(dh.abs());
            }
        }
    }
    assert!(worst < 0.1, "max |dh| = {worst}");
}

#[test]
fn residual_model_recovers_true_weekday_differences() {
    let env = fixed_context_env(0.5, 0.25);
    let (data, model) = two_stage_on(&env, 8000);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for rec in data.records().iter().step_by(7) {
        for other in data.records().iter().step_by(13).take(40) {
            if other.a != rec.a || !seasons8().indicator(rec.t, other.t).unwrap() {
                continue;
            }
            let est = model.h_part(&rec.x, rec.t, rec.a).unwrap()
                - model.h_part(&rec.x, other.t, rec.a).unwrap();
            let truth = 0.5
                * (env.h(&rec.x, rec.t, rec.a).unwrap() - env.h(&rec.x, other.t, rec.a).unwrap());
            worst = worst.max((est - truth).abs());
            checked += 1;
        }
    }
    assert!(checked > 100, "{checked}");
    assert!(worst < 0.2, "max error {worst}");
}

#[test]
fn two_stage_is_additive_and_drops_h_in_the_future() {
    let env = fixed_context_env(0.5, 0.5);
    let (data, model) = two_stage_on(&env, 2000);
    let whole = RewardModel::TwoStage(model.clone());
    for rec in data.records().iter().take(30) {
        let sum = model.g_part(&rec.x, rec.t, rec.a).unwrap()
            + model.h_part(&rec.x, rec.t, rec.a).unwrap();
        assert_eq!(whole.predict(&rec.x, rec.t, rec.a).unwrap(), sum);
    }
    let x = &data.records()[0].x;
    let future = day_start(1, 100);
    assert_eq!(model.h_part(x, future, 3).unwrap(), 0.0);
    assert!(model.h_part(x, day_start(0, 100), 3).unwrap() != 0.0);
    assert_eq!(
        whole.predict(x, future, 3).unwrap(),
        model.g_part(x, future, 3).unwrap()
    );
}

#[test]
fn spec_fits_each_kind() {
    let env = small_env(json!({}));
    let data = env.sample_logged_data(200, 3).unwrap();
    let phi = seasons8();
    for kind in [
        RewardKind::Zero,
        RewardKind::Direct,
        RewardKind::TwoStage,
        RewardKind::Oracle,
    ] {
        let m = RewardModelSpec::of_kind(kind)
            .fit(&data, &phi, Some(&env))
            .unwrap();
        assert_eq!(serde_json::to_value(kind).unwrap(), json!(m.kind()));
    }
    let err = RewardModelSpec::of_kind(RewardKind::Oracle)
        .fit(&data, &phi, None)
        .unwrap_err();
    assert!(err.is_config());
}

#[test]
fn spec_parses_from_json() {
    let spec: RewardModelSpec = serde_json::from_value(json!({
        "kind": "two_stage",
        "two_stage": {"pairs": {"cells": {"kind": "quantile", "bins": 3}, "max_pairs": 10}}
    }))
    .unwrap();
    assert_eq!(spec.kind, RewardKind::TwoStage);
    assert_eq!(
        spec.two_stage.pairs.cells,
        ContextCells::Quantile { bins: 3 }
    );
    assert!(serde_json::from_value::<RewardModelSpec>(json!({"kind": "forest"})).is_err());
}
