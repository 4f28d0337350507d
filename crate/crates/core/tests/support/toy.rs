//! A world small enough to enumerate: a handful of contexts, four logging
//! timestamps split into two feature clusters, two actions, and two-point
//! rewards. Every expectation below is an exact finite sum.

#![allow(dead_code)]

use opfv::env::{DatasetMeta, LoggedDataset, LoggedRecord};
use opfv::estimators::opfv;
use opfv::policy::{opfv_pg, FnPolicy, SoftmaxPolicy};
use opfv::reward::FnReward;
use opfv::{TimeDistribution, TimeFeatureFn, Timestamp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TIMES: [Timestamp; 4] = [0, 1, 2, 3];
pub const T_PRIME: Timestamp = 5;
pub const N_ACTIONS: usize = 2;
const SLOTS: usize = 5;

/// `[context][slot][action]`, where slots 0..4 are the logging timestamps and
/// slot 4 is the target time.
pub type Table = Vec<[[f64; N_ACTIONS]; SLOTS]>;

fn slot(t: Timestamp) -> usize {
    if t == T_PRIME {
        4
    } else {
        t as usize
    }
}

fn normalized(rng: &mut ChaCha8Rng) -> [f64; N_ACTIONS] {
    let a = rng.random_range(0.1..1.0);
    let b = rng.random_range(0.1..1.0);
    [a / (a + b), b / (a + b)]
}

pub struct ToyWorld {
    pub xs: Vec<f64>,
    pub px: Vec<f64>,
    pub q: Table,
    /// Half-width of the two-point reward, so the reward variance is `s^2`.
    pub noise: Table,
    pub pi0: Table,
    /// Evaluation policy at the target time.
    pub pi_e: Vec<[f64; N_ACTIONS]>,
}

impl ToyWorld {
    pub fn random(n_contexts: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n_contexts).map(|i| i as f64 - 0.5).collect();
        let weights: Vec<f64> = (0..n_contexts)
            .map(|_| rng.random_range(0.2..1.0))
            .collect();
        let total: f64 = weights.iter().sum();
        let px = weights.iter().map(|w| w / total).collect();
        let mut table = |lo: f64, hi: f64| -> Table {
            (0..n_contexts)
                .map(|_| {
                    let mut t = [[0.0; N_ACTIONS]; SLOTS];
                    for row in &mut t {
                        for v in row.iter_mut() {
                            *v = rng.random_range(lo..hi);
                        }
                    }
                    t
                })
                .collect()
        };
        let q = table(-1.0, 1.0);
        let noise = table(0.1, 1.0);
        let mut pi0 = Vec::new();
        let mut pi_e = Vec::new();
        for _ in 0..n_contexts {
            let mut rows = [[0.0; N_ACTIONS]; SLOTS];
            for row in &mut rows {
                *row = normalized(&mut rng);
            }
            pi0.push(rows);
            pi_e.push(normalized(&mut rng));
        }
        Self {
            xs,
            px,
            q,
            noise,
            pi0,
            pi_e,
        }
    }

    pub fn n_contexts(&self) -> usize {
        self.xs.len()
    }

    fn context_index(&self, x: &[f64]) -> usize {
        self.xs
            .iter()
            .position(|&v| v == x[0])
            .expect("toy context")
    }

    /// Clusters {0, 1} and {2, 3}; the target time falls in the first.
    pub fn phi() -> TimeFeatureFn {
        TimeFeatureFn::custom("toy", 2, T_PRIME, 1, |t| {
            if t <= 3 {
                (t / 2) as usize
            } else {
                0
            }
        })
        .unwrap()
    }

    pub fn pt() -> TimeDistribution {
        TimeDistribution::uniform(0, 3).unwrap()
    }

    fn cluster(t: Timestamp) -> usize {
        Self::phi().feature_of(t).unwrap()
    }

    fn indicator_ratio(t: Timestamp) -> f64 {
        let target = Self::cluster(T_PRIME);
        let p = TIMES
            .iter()
            .filter(|&&s| Self::cluster(s) == target)
            .count() as f64
            / TIMES.len() as f64;
        if Self::cluster(t) == target {
            1.0 / p
        } else {
            0.0
        }
    }

    pub fn oracle_model(&self) -> Table {
        self.q.clone()
    }

    /// `q + b(x, phi(t), a)`: wrong everywhere but correct on within-cluster
    /// differences.
    pub fn cpc_model(&self, seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets: Vec<[[f64; N_ACTIONS]; 2]> = (0..self.n_contexts())
            .map(|_| {
                let mut b = [[0.0; N_ACTIONS]; 2];
                for row in &mut b {
                    for v in row.iter_mut() {
                        *v = rng.random_range(-0.5..0.5);
                    }
                }
                b
            })
            .collect();
        let mut f = self.q.clone();
        for (xi, rows) in f.iter_mut().enumerate() {
            for (s, t) in TIMES.iter().chain(&[T_PRIME]).enumerate() {
                for a in 0..N_ACTIONS {
                    rows[s][a] += offsets[xi][Self::cluster(*t)][a];
                }
            }
        }
        f
    }

    pub fn generic_model(&self, seed: u64) -> Table {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.n_contexts())
            .map(|_| {
                let mut t = [[0.0; N_ACTIONS]; SLOTS];
                for row in &mut t {
                    for v in row.iter_mut() {
                        *v = rng.random_range(-1.0..1.0);
                    }
                }
                t
            })
            .collect()
    }

    pub fn predictor(&self, table: &Table) -> FnReward {
        let table = table.clone();
        let xs = self.xs.clone();
        FnReward::new(move |x, t, a| {
            let xi = xs.iter().position(|&v| v == x[0]).expect("toy context");
            table[xi][slot(t)][a]
        })
    }

    pub fn evaluation_policy(&self) -> FnPolicy {
        let pi_e = self.pi_e.clone();
        let xs = self.xs.clone();
        FnPolicy::new(N_ACTIONS, move |x, _, out| {
            let xi = xs.iter().position(|&v| v == x[0]).expect("toy context");
            out.copy_from_slice(&pi_e[xi]);
            Ok(())
        })
    }

    /// Every single-record dataset with its probability.
    pub fn outcomes(&self) -> Vec<(f64, LoggedDataset)> {
        let mut out = Vec::new();
        for (xi, &x) in self.xs.iter().enumerate() {
            for &t in &TIMES {
                for a in 0..N_ACTIONS {
                    let p0 = self.pi0[xi][slot(t)][a];
                    let (q, s) = (self.q[xi][slot(t)][a], self.noise[xi][slot(t)][a]);
                    for r in [q - s, q + s] {
                        let prob = self.px[xi] * 0.25 * p0 * 0.5;
                        let rec = LoggedRecord {
                            x: vec![x],
                            t,
                            a,
                            r,
                            pscore: p0,
                        };
                        let meta = DatasetMeta {
                            horizon: 3,
                            n_actions: N_ACTIONS,
                            context_dim: 1,
                            env: None,
                            data_seed: None,
                        };
                        out.push((prob, LoggedDataset::new(vec![rec], meta).unwrap()));
                    }
                }
            }
        }
        out
    }

    /// `V_{t'}(pi_e)`.
    pub fn value(&self) -> f64 {
        (0..self.n_contexts())
            .map(|xi| {
                self.px[xi]
                    * (0..N_ACTIONS)
                        .map(|a| self.pi_e[xi][a] * self.q[xi][4][a])
                        .sum::<f64>()
            })
            .sum()
    }

    /// Exact mean and variance of the single-record OPFV estimate, computed by
    /// running the library estimator on every outcome.
    pub fn opfv_moments(&self, model: &Table) -> (f64, f64) {
        let (phi, pt) = (Self::phi(), Self::pt());
        let f_hat = self.predictor(model);
        let pi_e = self.evaluation_policy();
        let mut values = Vec::new();
        for (p, data) in self.outcomes() {
            values.push((
                p,
                opfv(&data, &pi_e, T_PRIME, &phi, &f_hat, &pt)
                    .unwrap()
                    .value,
            ));
        }
        let mean: f64 = values.iter().map(|(p, v)| p * v).sum();
        let var: f64 = values.iter().map(|(p, v)| p * (v - mean).powi(2)).sum();
        (mean, var)
    }

    /// `E_{p(x,t) pi_e(a|x,t')}[I/p (Delta_q - Delta_f)]`.
    pub fn bias_formula(&self, model: &Table) -> f64 {
        let mut total = 0.0;
        for xi in 0..self.n_contexts() {
            for &t in &TIMES {
                for a in 0..N_ACTIONS {
                    let dq = self.q[xi][slot(t)][a] - self.q[xi][4][a];
                    let df = model[xi][slot(t)][a] - model[xi][4][a];
                    total += self.px[xi]
                        * 0.25
                        * self.pi_e[xi][a]
                        * Self::indicator_ratio(t)
                        * (dq - df);
                }
            }
        }
        total
    }

    /// The four variance terms in order: reward noise, action sampling,
    /// time sampling, and context sampling.
    pub fn variance_terms(&self, model: &Table) -> [f64; 4] {
        let ratios: Vec<f64> = TIMES.iter().map(|&t| Self::indicator_ratio(t)).collect();
        let ratio_mean = ratios.iter().sum::<f64>() / 4.0;
        let ratio_var = ratios.iter().map(|r| (r - ratio_mean).powi(2)).sum::<f64>() / 4.0;
        let (mut noise, mut action, mut time) = (0.0, 0.0, 0.0);
        let mut target_values = Vec::new();
        for xi in 0..self.n_contexts() {
            let err = |a: usize| self.q[xi][4][a] - model[xi][4][a];
            for &t in &TIMES {
                let ratio = Self::indicator_ratio(t);
                let (mut m1, mut m2) = (0.0, 0.0);
                for a in 0..N_ACTIONS {
                    let p0 = self.pi0[xi][slot(t)][a];
                    let w = self.pi_e[xi][a] / p0;
                    noise += self.px[xi]
                        * 0.25
                        * p0
                        * (ratio * w).powi(2)
                        * self.noise[xi][slot(t)][a].powi(2);
                    m1 += p0 * w * err(a);
                    m2 += p0 * (w * err(a)).powi(2);
                }
                action += self.px[xi] * 0.25 * ratio * ratio * (m2 - m1 * m1);
            }
            let drift: f64 = (0..N_ACTIONS).map(|a| self.pi_e[xi][a] * err(a)).sum();
            time += self.px[xi] * drift * drift;
            target_values.push(
                (0..N_ACTIONS)
                    .map(|a| self.pi_e[xi][a] * self.q[xi][4][a])
                    .sum::<f64>(),
            );
        }
        let v_mean: f64 = target_values.iter().zip(&self.px).map(|(v, p)| p * v).sum();
        let context: f64 = target_values
            .iter()
            .zip(&self.px)
            .map(|(v, p)| p * (v - v_mean).powi(2))
            .sum();
        [noise, action, ratio_var * time, context]
    }

    fn softmax_table(&self, policy: &SoftmaxPolicy) -> Vec<[f64; N_ACTIONS]> {
        self.xs
            .iter()
            .map(|&x| {
                let p = policy.action_probs(&[x]).unwrap();
                [p[0], p[1]]
            })
            .collect()
    }

    /// Exact expectation of the single-record OPFV policy gradient.
    pub fn opfv_pg_mean(&self, policy: &SoftmaxPolicy, model: &Table) -> Vec<f64> {
        let (phi, pt) = (Self::phi(), Self::pt());
        let f_hat = self.predictor(model);
        let mut mean = vec![0.0; policy.n_params()];
        for (p, data) in self.outcomes() {
            let g = opfv_pg(&data, policy, T_PRIME, &phi, &f_hat, &pt).unwrap();
            for (m, gi) in mean.iter_mut().zip(g) {
                *m += p * gi;
            }
        }
        mean
    }

    /// `grad V_{t'}(pi_zeta) = E_x sum_a pi(a|x) s(x, a) q(x, t', a)`.
    pub fn true_gradient(&self, policy: &SoftmaxPolicy) -> Vec<f64> {
        let pi = self.softmax_table(policy);
        let mut grad = vec![0.0; policy.n_params()];
        for (xi, &x) in self.xs.iter().enumerate() {
            for a in 0..N_ACTIONS {
                let c = self.px[xi] * pi[xi][a] * self.q[xi][4][a];
                for (g, s) in grad.iter_mut().zip(policy.score(&[x], a).unwrap()) {
                    *g += c * s;
                }
            }
        }
        grad
    }

    /// `E_{p(x,t) pi(a|x)}[I/p (Delta_q - Delta_f) s(x, a)]`.
    pub fn gradient_bias_formula(&self, policy: &SoftmaxPolicy, model: &Table) -> Vec<f64> {
        let pi = self.softmax_table(policy);
        let mut bias = vec![0.0; policy.n_params()];
        for (xi, &x) in self.xs.iter().enumerate() {
            for &t in &TIMES {
                for a in 0..N_ACTIONS {
                    let dq = self.q[xi][slot(t)][a] - self.q[xi][4][a];
                    let df = model[xi][slot(t)][a] - model[xi][4][a];
                    let c = self.px[xi] * 0.25 * pi[xi][a] * Self::indicator_ratio(t) * (dq - df);
                    for (b, s) in bias.iter_mut().zip(policy.score(&[x], a).unwrap()) {
                        *b += c * s;
                    }
                }
            }
        }
        bias
    }
}
