//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! straight to stdout so the verdicts show up even when output is captured.

#[path = "support/toy.rs"]
mod toy;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use opfv::env::{make_env, EvaluationPolicy, LoggingPolicy, DOMAIN_END, LOGGING_END};
use opfv::estimators::{dr_naive, opfv as opfv_estimate, opfv_extended, snips};
use opfv::harness::{run, ExperimentConfig, ExperimentReport, LongRow};
use opfv::policy::{
    iml_gradient, iml_objective, FrozenAt, GradientEstimator, Policy, SoftmaxPolicy, SoftmaxSpec,
};
use opfv::reward::{
    fit_direct, DirectConfig, RewardKind, RewardModel, RewardModelSpec, RewardPredictor,
};
use opfv::timefeat::day_start;
use opfv::tuning::{tune_phi, CandidateSet};
use opfv::{stats, TimeDistribution, TimeFeatureFn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use toy::ToyWorld;

fn verdict(id: u32, name: &str, ok: bool, elapsed: Duration, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{status} criterion {id:>2} {name} ({:.1}s): {detail}",
        elapsed.as_secs_f64()
    )
    .unwrap();
    out.flush().unwrap();
    assert!(ok, "criterion {id} {name}: {detail}");
}

fn config(name: &str) -> ExperimentConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name]
        .iter()
        .collect();
    ExperimentConfig::load(&path, &[]).unwrap()
}

fn mse(report: &ExperimentReport, method: &str, value: f64) -> f64 {
    report
        .agg_row(method, value)
        .unwrap_or_else(|| panic!("no row for {method} at {value}"))
        .mse
}

/// Errors grouped by target for one method and sweep value.
fn errors_by_target(long: &[LongRow], method: &str, value: f64) -> BTreeMap<i64, Vec<f64>> {
    let mut out: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in long
        .iter()
        .filter(|r| r.method == method && r.sweep_value == value)
    {
        let e = r.estimate.expect("acceptance runs must not fail") - r.true_value;
        out.entry(r.target).or_default().push(e);
    }
    out
}

/// Squared bias averaged over targets with a delta-method standard error.
fn bias2_with_se(long: &[LongRow], method: &str, value: f64) -> (f64, f64) {
    let groups = errors_by_target(long, method, value);
    let k = groups.len() as f64;
    let (mut b2, mut var) = (0.0, 0.0);
    for errs in groups.values() {
        let b = stats::mean(errs);
        let se = stats::std_error(errs);
        b2 += b * b / k;
        var += (2.0 * b * se / k).powi(2);
    }
    (b2, var.sqrt())
}

/// `P(Binomial(n, 1/2) >= wins)`.
fn sign_test_p(wins: usize, n: usize) -> f64 {
    let choose =
        |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    (wins..=n).map(|k| choose(n, k)).sum::<f64>() / 2f64.powi(n as i32)
}

#[test]
fn criterion_01_toy_bias_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let world = ToyWorld::random(1, seed);
        for model in [
            world.generic_model(seed + 1000),
            world.cpc_model(seed),
            world.oracle_model(),
        ] {
            let (mean, _) = world.opfv_moments(&model);
            worst = worst.max((mean - world.value() - world.bias_formula(&model)).abs());
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-10 && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "toy bias identity",
        ok,
        elapsed,
        &format!("max |diff| = {worst:.2e}"),
    );
}

#[test]
fn criterion_02_toy_variance_identity() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let world = ToyWorld::random(1, seed);
        let model = world.oracle_model();
        let (_, var) = world.opfv_moments(&model);
        let sum: f64 = world.variance_terms(&model).iter().sum();
        worst = worst.max((var - sum).abs());
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-10 && elapsed < Duration::from_secs(1);
    verdict(
        2,
        "toy variance identity",
        ok,
        elapsed,
        &format!("max |diff| = {worst:.2e}"),
    );
}

#[test]
fn criterion_03_reductions() {
    let start = Instant::now();
    let env = Arc::new(make_env(3, &json!({})).unwrap());
    let data = env.sample_logged_data(500, 11).unwrap();
    let pi_e = EvaluationPolicy::new(Arc::clone(&env));
    let t_prime = day_start(1, 100);
    let pt = TimeDistribution::uniform(0, LOGGING_END).unwrap();
    let constant = TimeFeatureFn::constant(DOMAIN_END);
    let seasons = TimeFeatureFn::seasons(8, DOMAIN_END).unwrap();
    let f_hat = fit_direct(&data, &constant, &DirectConfig::default()).unwrap();
    let max_diff = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(u, v)| (u - v).abs())
            .fold(0.0, f64::max)
    };

    let a = opfv_estimate(&data, &pi_e, t_prime, &constant, &f_hat, &pt).unwrap();
    let b = dr_naive(
        &data,
        &FrozenAt {
            inner: &pi_e,
            t: t_prime,
        },
        &f_hat,
    )
    .unwrap();
    let dr_gap = max_diff(
        a.per_sample_terms.as_deref().unwrap(),
        b.per_sample_terms.as_deref().unwrap(),
    );

    let zero = opfv_estimate(&data, &pi_e, t_prime, &seasons, &RewardModel::Zero, &pt).unwrap();
    let p_phi = seasons.marginal_prob(t_prime, &pt).unwrap();
    let target = seasons.feature_of(t_prime).unwrap();
    let ips_form: Vec<f64> = data
        .records()
        .iter()
        .map(|r| {
            let hit = f64::from(u8::from(seasons.feature_of(r.t).unwrap() == target));
            hit / p_phi * pi_e.probs(&r.x, t_prime).unwrap()[r.a] / r.pscore * r.r
        })
        .collect();
    let ips_gap = max_diff(zero.per_sample_terms.as_deref().unwrap(), &ips_form);

    let ext = opfv_extended(&data, &pi_e, t_prime, &constant, &seasons, &f_hat, &pt).unwrap();
    let base = opfv_estimate(&data, &pi_e, t_prime, &seasons, &f_hat, &pt).unwrap();
    let ext_gap = max_diff(
        ext.per_sample_terms.as_deref().unwrap(),
        base.per_sample_terms.as_deref().unwrap(),
    );

    let elapsed = start.elapsed();
    let ok =
        dr_gap < 1e-12 && ips_gap < 1e-12 && ext_gap < 1e-12 && elapsed < Duration::from_secs(1);
    verdict(
        3,
        "reductions",
        ok,
        elapsed,
        &format!("dr {dr_gap:.1e}, ips {ips_gap:.1e}, extended {ext_gap:.1e}"),
    );
}

#[test]
fn criterion_04_unbiasedness_with_oracle() {
    let start = Instant::now();
    let report = run(&config("unbiased.json")).unwrap();
    let estimates: Vec<f64> = report.long.iter().map(|r| r.estimate.unwrap()).collect();
    let truth = report.long[0].true_value;
    let gap = stats::mean(&estimates) - truth;
    let se = stats::std_error(&estimates);
    let elapsed = start.elapsed();
    let ok = estimates.len() == 1000 && gap.abs() < 3.5 * se && elapsed < Duration::from_secs(120);
    verdict(
        4,
        "unbiasedness",
        ok,
        elapsed,
        &format!("mean - truth = {gap:.4} ({:.2} SE)", gap / se),
    );
}

#[test]
fn criterion_05_lambda_sweep_trend() {
    let start = Instant::now();
    let report = run(&config("lambda_sweep.json")).unwrap();
    let methods: Vec<String> = report.config.estimators.iter().map(|e| e.label()).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for value in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let opfv = mse(&report, "opfv", value);
        if value >= 0.4 {
            let rival = ["ips", "dr", "prognosticator"]
                .iter()
                .map(|m| mse(&report, m, value))
                .fold(f64::INFINITY, f64::min);
            ok &= opfv < rival;
            detail.push(format!("l={value}: opfv {opfv:.3} < {rival:.3}"));
        } else {
            let all: Vec<f64> = methods.iter().map(|m| mse(&report, m, value)).collect();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(0.0, f64::max);
            ok &= hi <= 2.0 * lo;
            detail.push(format!("l={value}: max/min {:.2}", hi / lo));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    verdict(5, "lambda sweep trend", ok, elapsed, &detail.join("; "));
}

#[test]
fn criterion_06_phi_cardinality_trend() {
    let start = Instant::now();
    let report = run(&config("phi_sweep.json")).unwrap();
    let cards = [2.0, 4.0, 8.0];
    let bias: Vec<(f64, f64)> = cards
        .iter()
        .map(|&c| bias2_with_se(&report.long, "opfv", c))
        .collect();
    let mut inversions = 0;
    let mut within_se = true;
    for w in bias.windows(2) {
        let ((b0, s0), (b1, s1)) = (w[0], w[1]);
        if b1 > b0 {
            inversions += 1;
            within_se &= b1 - b0 <= (s0 * s0 + s1 * s1).sqrt();
        }
    }
    let var2 = report.agg_row("opfv", 2.0).unwrap().var;
    let var16 = report.agg_row("opfv", 16.0).unwrap().var;
    let elapsed = start.elapsed();
    let ok = inversions <= 1 && within_se && var16 > var2 && elapsed < Duration::from_secs(600);
    let b: Vec<String> = bias
        .iter()
        .map(|(b, s)| format!("{b:.3}+-{s:.3}"))
        .collect();
    verdict(
        6,
        "phi cardinality trend",
        ok,
        elapsed,
        &format!(
            "bias2 at 2/4/8 = {}; var16 {var16:.3} vs var2 {var2:.3}",
            b.join(", ")
        ),
    );
}

#[test]
fn criterion_07_sample_size_trend() {
    let start = Instant::now();
    let report = run(&config("n_sweep.json")).unwrap();
    let methods: Vec<String> = report.config.estimators.iter().map(|e| e.label()).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for n in [500.0, 1000.0, 2000.0, 4000.0] {
        let opfv = mse(&report, "opfv", n);
        let rival = methods
            .iter()
            .filter(|m| *m != "opfv")
            .map(|m| mse(&report, m, n))
            .fold(f64::INFINITY, f64::min);
        ok &= opfv < rival;
        detail.push(format!("n={n}: {opfv:.3} < {rival:.3}"));
    }
    let prog = report.agg_row("prognosticator", 500.0).unwrap().var;
    let opfv = report.agg_row("opfv", 500.0).unwrap().var;
    ok &= prog > opfv;
    detail.push(format!(
        "var at 500: prognosticator {prog:.3} vs opfv {opfv:.3}"
    ));
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(900);
    verdict(7, "sample size trend", ok, elapsed, &detail.join("; "));
}

#[test]
fn criterion_08_tuning_efficacy() {
    let start = Instant::now();
    let cfg = config("tune.json");
    let env = cfg.build_env(None, 0.0).unwrap();
    let pi_e = EvaluationPolicy::new(Arc::clone(&env));
    let set = CandidateSet::ladder(&cfg.tune.ladder, DOMAIN_END).unwrap();
    let pt = TimeDistribution::uniform(0, LOGGING_END).unwrap();
    let targets = cfg.target_grid.unwrap_or_default().times();
    let truths: Vec<f64> = targets
        .iter()
        .map(|&t| {
            env.true_policy_value(&pi_e, t, cfg.n_mc, cfg.oracle_seed)
                .unwrap()
                .mean
        })
        .collect();
    let seeds = cfg.seeds.list();
    // Per seed: for each target, the selected index and every candidate's squared error.
    let runs: Vec<Vec<(usize, Vec<f64>)>> = seeds
        .par_iter()
        .map(|&seed| {
            let data = env.sample_logged_data(cfg.n, seed).unwrap();
            let f_hat = cfg
                .tune
                .reward
                .fit(&data, set.finest(), Some(&env))
                .unwrap();
            targets
                .iter()
                .zip(&truths)
                .map(|(&t, &truth)| {
                    let pick = tune_phi(&data, &pi_e, t, &set, &f_hat, &pt)
                        .unwrap()
                        .selected_index;
                    let sq = set
                        .candidates()
                        .iter()
                        .map(|phi| {
                            (opfv_estimate(&data, &pi_e, t, phi, &f_hat, &pt)
                                .unwrap()
                                .value
                                - truth)
                                .powi(2)
                        })
                        .collect();
                    (pick, sq)
                })
                .collect()
        })
        .collect();
    let n_phi = set.candidates().len();
    let mut good = 0;
    for (j, _) in targets.iter().enumerate() {
        let per_phi: Vec<f64> = (0..n_phi)
            .map(|i| runs.iter().map(|r| r[j].1[i]).sum::<f64>() / seeds.len() as f64)
            .collect();
        let best = per_phi.iter().copied().fold(f64::INFINITY, f64::min);
        good += runs
            .iter()
            .filter(|r| per_phi[r[j].0] <= 1.5 * best)
            .count();
    }
    let frac = good as f64 / (seeds.len() * targets.len()) as f64;
    let elapsed = start.elapsed();
    let ok = frac >= 0.8 && elapsed < Duration::from_secs(600);
    verdict(
        8,
        "tuning efficacy",
        ok,
        elapsed,
        &format!(
            "selection within 1.5x of best MSE in {:.1}% of seed-target pairs",
            100.0 * frac
        ),
    );
}

#[test]
fn criterion_09_gradients_match_finite_differences() {
    let start = Instant::now();
    let env = Arc::new(make_env(5, &json!({"context_dim": 4, "n_actions": 5})).unwrap());
    let data = env.sample_logged_data(200, 2).unwrap();
    let f_hat: Arc<dyn RewardPredictor> = Arc::new(
        RewardModelSpec::of_kind(RewardKind::Direct)
            .fit(&data, &TimeFeatureFn::constant(DOMAIN_END), None)
            .unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut policy = SoftmaxPolicy::zeros(SoftmaxSpec::default(), 5, 4);
    for v in &mut policy.params {
        *v = rng.random_range(-0.5..0.5);
    }
    let estimators = [
        (
            "opfv_pg",
            GradientEstimator::Opfv {
                t_prime: day_start(1, 50),
                phi: TimeFeatureFn::seasons(8, DOMAIN_END).unwrap(),
                reward: Arc::clone(&f_hat),
                pt: TimeDistribution::uniform(0, LOGGING_END).unwrap(),
            },
        ),
        ("ips_pg", GradientEstimator::Ips),
        ("dr_pg", GradientEstimator::Dr { reward: f_hat }),
    ];
    type Objective<'a> = Box<dyn Fn(&SoftmaxPolicy) -> f64 + 'a>;
    let mut checks: Vec<(&str, Vec<f64>, Objective<'_>)> = estimators
        .iter()
        .map(|(name, est)| {
            let grad = est.gradient(&data, &policy).unwrap();
            let obj: Objective<'_> = Box::new(|p: &SoftmaxPolicy| est.objective(&data, p).unwrap());
            (*name, grad, obj)
        })
        .collect();
    checks.push((
        "iml",
        iml_gradient(&data, &policy).unwrap(),
        Box::new(|p: &SoftmaxPolicy| iml_objective(&data, p).unwrap()),
    ));
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (_, grad, objective) in &checks {
        let norm = stats::dot(grad, grad).sqrt();
        for _ in 0..20 {
            let u: Vec<f64> = (0..policy.n_params())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let len = stats::dot(&u, &u).sqrt();
            let u: Vec<f64> = u.iter().map(|v| v / len).collect();
            let at = |s: f64| {
                policy
                    .with_params(
                        policy
                            .params
                            .iter()
                            .zip(&u)
                            .map(|(p, d)| p + s * d)
                            .collect(),
                    )
                    .unwrap()
            };
            let fd = (objective(&at(h)) - objective(&at(-h))) / (2.0 * h);
            let analytic = stats::dot(grad, &u);
            worst = worst.max((fd - analytic).abs() / norm.max(1e-12));
        }
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-5 && elapsed < Duration::from_secs(30);
    verdict(
        9,
        "gradient correctness",
        ok,
        elapsed,
        &format!("max relative error {worst:.2e}"),
    );
}

#[test]
fn criterion_10_learning_direction() {
    let start = Instant::now();
    let report = run(&config("fopl.json")).unwrap();
    let value = |method: &str| -> BTreeMap<u64, f64> {
        report
            .long
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.seed, r.estimate.unwrap()))
            .collect()
    };
    let ours = value("opfv_pg");
    let mut ok = true;
    let mut detail = vec![format!(
        "opfv_pg mean {:.3}",
        stats::mean(&ours.values().copied().collect::<Vec<_>>())
    )];
    for rival in ["ips_pg", "dr_pg"] {
        let theirs = value(rival);
        let wins = ours.iter().filter(|(s, v)| **v > theirs[s]).count();
        let p = sign_test_p(wins, ours.len());
        let mean = stats::mean(&theirs.values().copied().collect::<Vec<_>>());
        ok &= p < 0.1 && stats::mean(&ours.values().copied().collect::<Vec<_>>()) > mean;
        detail.push(format!(
            "vs {rival} (mean {mean:.3}): {wins}/{} wins, p={p:.4}",
            ours.len()
        ));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1200);
    verdict(10, "learning direction", ok, elapsed, &detail.join("; "));
}

#[test]
fn criterion_11_extended_estimator() {
    let start = Instant::now();
    let report = run(&config("extended.json")).unwrap();
    let abs_err = |method: &str| -> BTreeMap<(u64, i64), f64> {
        report
            .long
            .iter()
            .filter(|r| r.method == method)
            .map(|r| {
                (
                    (r.seed, r.target),
                    (r.estimate.unwrap() - r.true_value).abs(),
                )
            })
            .collect()
    };
    let ext = abs_err("opfv_extended");
    let base = abs_err("opfv");
    let diffs: Vec<f64> = ext.iter().map(|(k, e)| e - base[k]).collect();
    let mean = stats::mean(&diffs);
    let t = mean / stats::std_error(&diffs);
    let mae = |m: &BTreeMap<(u64, i64), f64>| stats::mean(&m.values().copied().collect::<Vec<_>>());
    let elapsed = start.elapsed();
    // One-sided paired t-test at the 5% level.
    let ok = t < -1.645 && elapsed < Duration::from_secs(600);
    verdict(
        11,
        "extended estimator",
        ok,
        elapsed,
        &format!(
            "MAE {:.4} vs {:.4}, paired t = {t:.2}",
            mae(&ext),
            mae(&base)
        ),
    );
}

#[test]
fn criterion_12_self_normalized_evaluators() {
    let start = Instant::now();
    let env = Arc::new(make_env(12, &json!({})).unwrap());
    let data = env.sample_logged_data(1000, 4).unwrap();
    let rewards: Vec<f64> = data.records().iter().map(|r| r.r).collect();
    let on_policy = snips(&data, &LoggingPolicy(Arc::clone(&env))).unwrap();
    let exact = on_policy == stats::mean(&rewards);
    let pi_e = EvaluationPolicy::new(Arc::clone(&env));
    let reference = snips(&data, &pi_e).unwrap();
    let worst = [1e-3, 0.25, 0.5, 0.9]
        .iter()
        .map(|&c| {
            (snips(&data.with_scaled_propensities(c).unwrap(), &pi_e).unwrap() - reference).abs()
        })
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    let ok = exact && worst < 1e-12;
    verdict(
        12,
        "self-normalized evaluators",
        ok,
        elapsed,
        &format!("on-policy snips equals reward mean: {exact}; scaling drift {worst:.1e}"),
    );
}
