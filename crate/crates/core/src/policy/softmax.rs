use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::stats;
use crate::timefeat::Timestamp;

/// Architecture of a [`SoftmaxPolicy`]: `hidden = 0` is a linear softmax on
/// `[1, x]`, otherwise one `tanh` layer of that width sits in between.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxSpec {
    pub hidden: usize,
}

/// Time-independent softmax policy `pi_zeta(a | x)`.
///
/// Parameters are stored flat. Linear: `W` is `A x (1 + d)` row-major.
/// Hidden: `W1` (`H x (1 + d)`) followed by `W2` (`A x (1 + H)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPolicy {
    pub spec: SoftmaxSpec,
    pub n_actions: usize,
    pub context_dim: usize,
    pub params: Vec<f64>,
}

impl SoftmaxPolicy {
    pub fn zeros(spec: SoftmaxSpec, n_actions: usize, context_dim: usize) -> Self {
        let len = Self::param_count(spec, n_actions, context_dim);
        Self {
            spec,
            n_actions,
            context_dim,
            params: vec![0.0; len],
        }
    }

    /// Parameters drawn i.i.d. from `Normal(0, 0.01^2)`.
    pub fn init(spec: SoftmaxSpec, n_actions: usize, context_dim: usize, seed: u64) -> Self {
        let mut policy = Self::zeros(spec, n_actions, context_dim);
        let mut rng = stream_rng(seed, Stream::Init, 0);
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        for p in &mut policy.params {
            *p = normal.sample(&mut rng);
        }
        policy
    }

    pub fn param_count(spec: SoftmaxSpec, n_actions: usize, context_dim: usize) -> usize {
        if spec.hidden == 0 {
            n_actions * (1 + context_dim)
        } else {
            spec.hidden * (1 + context_dim) + n_actions * (1 + spec.hidden)
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params.len() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(Self {
            params,
            ..self.clone()
        })
    }

    fn check_context(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.context_dim {
            return Err(Error::config(format!(
                "context has {} dimensions, policy expects {}",
                x.len(),
                self.context_dim
            )));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let d1 = 1 + self.context_dim;
        (0..self.spec.hidden)
            .map(|j| {
                let row = &self.params[j * d1..(j + 1) * d1];
                (row[0] + stats::dot(&row[1..], x)).tanh()
            })
            .collect()
    }

    fn affine(weights: &[f64], inputs: &[f64], n_out: usize, out: &mut [f64]) {
        let width = 1 + inputs.len();
        for (k, o) in out.iter_mut().enumerate().take(n_out) {
            let row = &weights[k * width..(k + 1) * width];
            *o = row[0] + stats::dot(&row[1..], inputs);
        }
    }

    /// Unnormalized logits for context `x`.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_context(x)?;
        let mut out = vec![0.0; self.n_actions];
        if self.spec.hidden == 0 {
            Self::affine(&self.params, x, self.n_actions, &mut out);
        } else {
            let z = self.hidden_activations(x);
            let off = self.spec.hidden * (1 + self.context_dim);
            Self::affine(&self.params[off..], &z, self.n_actions, &mut out);
        }
        Ok(out)
    }

    pub fn action_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(stats::softmax(&self.logits(x)?, 1.0))
    }

    /// Accumulate `scale * J^T dlogits` into `grad`, where `J` is the
    /// Jacobian of the logits with respect to the parameters at `x`.
    pub fn accumulate_logit_grad(
        &self,
        x: &[f64],
        dlogits: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        self.check_context(x)?;
        let d1 = 1 + self.context_dim;
        if self.spec.hidden == 0 {
            for (k, &dl) in dlogits.iter().enumerate() {
                let c = scale * dl;
                if c == 0.0 {
                    continue;
                }
                let row = &mut grad[k * d1..(k + 1) * d1];
                row[0] += c;
                for (g, xi) in row[1..].iter_mut().zip(x) {
                    *g += c * xi;
                }
            }
            return Ok(());
        }
        let h = self.spec.hidden;
        let z = self.hidden_activations(x);
        let off = h * d1;
        let h1 = 1 + h;
        let mut dz = vec![0.0; h];
        for (k, &dl) in dlogits.iter().enumerate() {
            let c = scale * dl;
            if c == 0.0 {
                continue;
            }
            let w_row = &self.params[off + k * h1..off + (k + 1) * h1];
            for (j, dzj) in dz.iter_mut().enumerate() {
                *dzj += c * w_row[1 + j];
            }
            let g_row = &mut grad[off + k * h1..off + (k + 1) * h1];
            g_row[0] += c;
            for (g, zj) in g_row[1..].iter_mut().zip(&z) {
                *g += c * zj;
            }
        }
        for j in 0..h {
            let c = dz[j] * (1.0 - z[j] * z[j]);
            if c == 0.0 {
                continue;
            }
            let row = &mut grad[j * d1..(j + 1) * d1];
            row[0] += c;
            for (g, xi) in row[1..].iter_mut().zip(x) {
                *g += c * xi;
            }
        }
        Ok(())
    }

    /// Score function `grad_zeta log pi(a | x)`.
    pub fn score(&self, x: &[f64], a: usize) -> Result<Vec<f64>> {
        let pi = self.action_probs(x)?;
        let mut dl: Vec<f64> = pi.iter().map(|p| -p).collect();
        dl[a] += 1.0;
        let mut grad = vec![0.0; self.n_params()];
        self.accumulate_logit_grad(x, &dl, 1.0, &mut grad)?;
        Ok(grad)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if p.params.len() != Self::param_count(p.spec, p.n_actions, p.context_dim) {
            return Err(Error::config(
                "parameter vector length does not match the policy shape",
            ));
        }
        Ok(p)
    }
}

impl Policy for SoftmaxPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, x: &[f64], _t: Timestamp, out: &mut [f64]) -> Result<()> {
        stats::softmax_into(&self.logits(x)?, 1.0, out);
        Ok(())
    }
}
