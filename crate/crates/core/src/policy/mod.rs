//! Policies and the future off-policy learning machinery.

mod gradient;
mod softmax;
mod train;

use std::fmt;
use std::sync::Arc;

pub use gradient::{
    dr_pg, iml_gradient, iml_objective, ips_pg, objective, opfv_pg, prognosticator_pg,
    GradientEstimator,
};
pub use softmax::{SoftmaxPolicy, SoftmaxSpec};
pub use train::{
    combined_gradient, reg_based_policy, train, IterationLog, RegBasedPolicy, TrainConfig,
    TrainOutput,
};

use crate::error::{Error, Result};
use crate::timefeat::Timestamp;

/// A conditional action distribution `pi(a | x, t)`.
pub trait Policy: Send + Sync {
    fn n_actions(&self) -> usize;

    /// Write `pi(. | x, t)` into `out` (length `n_actions`).
    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()>;

    fn probs(&self, x: &[f64], t: Timestamp) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.n_actions()];
        self.probs_into(x, t, &mut out)?;
        Ok(out)
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        (**self).probs_into(x, t, out)
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn n_actions(&self) -> usize {
        (**self).n_actions()
    }

    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        (**self).probs_into(x, t, out)
    }
}

/// Uniform over all actions.
#[derive(Debug, Clone, Copy)]
pub struct UniformPolicy(pub usize);

impl Policy for UniformPolicy {
    fn n_actions(&self) -> usize {
        self.0
    }

    fn probs_into(&self, _x: &[f64], _t: Timestamp, out: &mut [f64]) -> Result<()> {
        out.fill(1.0 / self.0 as f64);
        Ok(())
    }
}

/// Deterministic policy that always plays one action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantActionPolicy {
    pub n_actions: usize,
    pub action: usize,
}

impl Policy for ConstantActionPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, _x: &[f64], _t: Timestamp, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        out[self.action] = 1.0;
        Ok(())
    }
}

/// Evaluates the wrapped policy at a fixed time regardless of the query time.
#[derive(Debug, Clone)]
pub struct FrozenAt<P> {
    pub inner: P,
    pub t: Timestamp,
}

impl<P: Policy> Policy for FrozenAt<P> {
    fn n_actions(&self) -> usize {
        self.inner.n_actions()
    }

    fn probs_into(&self, x: &[f64], _t: Timestamp, out: &mut [f64]) -> Result<()> {
        self.inner.probs_into(x, self.t, out)
    }
}

type ProbFn = dyn Fn(&[f64], Timestamp, &mut [f64]) -> Result<()> + Send + Sync;

/// Policy backed by a closure.
#[derive(Clone)]
pub struct FnPolicy {
    n_actions: usize,
    f: Arc<ProbFn>,
}

impl FnPolicy {
    pub fn new<F>(n_actions: usize, f: F) -> Self
    where
        F: Fn(&[f64], Timestamp, &mut [f64]) -> Result<()> + Send + Sync + 'static,
    {
        Self {
            n_actions,
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for FnPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnPolicy")
            .field("n_actions", &self.n_actions)
            .finish()
    }
}

impl Policy for FnPolicy {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn probs_into(&self, x: &[f64], t: Timestamp, out: &mut [f64]) -> Result<()> {
        (self.f)(x, t, out)
    }
}

pub(crate) fn check_len(policy: &dyn Policy, n_actions: usize) -> Result<()> {
    if policy.n_actions() != n_actions {
        return Err(Error::config(format!(
            "policy has {} actions but the dataset has {}",
            policy.n_actions(),
            n_actions
        )));
    }
    Ok(())
}
