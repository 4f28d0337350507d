use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timefeat::{TimeFeatureFn, Timestamp};

/// Which interaction blocks a linear reward encoder includes on top of
/// `[1, x, onehot(phi(t)), onehot(a)]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderSpec {
    /// `onehot(phi(t) x a)`.
    pub feature_action: bool,
    /// `x (outer) onehot(a)`.
    pub context_action: bool,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        Self {
            feature_action: true,
            context_action: true,
        }
    }
}

/// Sparse feature map `(x, t, a) -> R^dim` for linear reward models.
#[derive(Debug, Clone)]
pub struct Encoder {
    phi: TimeFeatureFn,
    n_actions: usize,
    context_dim: usize,
    spec: EncoderSpec,
}

impl Encoder {
    pub fn new(
        phi: TimeFeatureFn,
        n_actions: usize,
        context_dim: usize,
        spec: EncoderSpec,
    ) -> Self {
        Self {
            phi,
            n_actions,
            context_dim,
            spec,
        }
    }

    pub fn phi(&self) -> &TimeFeatureFn {
        &self.phi
    }

    pub fn spec(&self) -> EncoderSpec {
        self.spec
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn dim(&self) -> usize {
        let c = self.phi.cardinality();
        let mut dim = 1 + self.context_dim + c + self.n_actions;
        if self.spec.feature_action {
            dim += c * self.n_actions;
        }
        if self.spec.context_action {
            dim += self.context_dim * self.n_actions;
        }
        dim
    }

    /// Write the non-zero coordinates of the encoding into `out` (cleared first).
    pub fn encode(
        &self,
        x: &[f64],
        t: Timestamp,
        a: usize,
        out: &mut Vec<(usize, f64)>,
    ) -> Result<()> {
        if x.len() != self.context_dim {
            return Err(Error::config(format!(
                "context has {} dimensions, reward model expects {}",
                x.len(),
                self.context_dim
            )));
        }
        if a >= self.n_actions {
            return Err(Error::config(format!("action {a} out of range")));
        }
        let c = self.phi.cardinality();
        let f = self.phi.feature_of(t)?;
        let d = self.context_dim;
        let n_a = self.n_actions;
        out.clear();
        out.push((0, 1.0));
        out.extend(x.iter().enumerate().map(|(i, &v)| (1 + i, v)));
        let mut off = 1 + d;
        out.push((off + f, 1.0));
        off += c;
        out.push((off + a, 1.0));
        off += n_a;
        if self.spec.feature_action {
            out.push((off + f * n_a + a, 1.0));
            off += c * n_a;
        }
        if self.spec.context_action {
            out.extend(x.iter().enumerate().map(|(i, &v)| (off + a * d + i, v)));
        }
        Ok(())
    }
}
