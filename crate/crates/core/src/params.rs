//! Named parameter records shared by layers, blocks, networks, the optimizer
//! and the checkpoint format.

use indexmap::IndexMap;

use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamRole {
    /// Convolution or classifier weights.
    Weight,
    /// Classifier bias (or a convolution bias when enabled).
    Bias,
    /// Batch-norm scale (gamma).
    NormScale,
    /// Batch-norm shift (beta).
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn is_trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }

    pub fn is_norm(self) -> bool {
        matches!(self, ParamRole::NormScale | ParamRole::NormShift)
    }
}

/// Gradient tensors keyed by parameter name, in visiting order.
pub type Gradients<T> = IndexMap<String, Tensor<T>>;

pub type ParamVisitor<'a, T> = dyn FnMut(&str, ParamRole, &Tensor<T>) + 'a;
pub type ParamVisitorMut<'a, T> = dyn FnMut(&str, ParamRole, &mut Tensor<T>) + 'a;

/// Anything that owns named tensors: trainable parameters and running statistics.
pub trait Parameterized<T: Scalar> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>);

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>);

    /// Number of trainable scalars.
    fn trainable_scalars(&self) -> usize {
        let mut total = 0;
        self.visit_params("", &mut |_, role, t| {
            if role.is_trainable() {
                total += t.len();
            }
        });
        total
    }

    /// Names of all trainable records in visiting order.
    fn trainable_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params("", &mut |name, role, _| {
            if role.is_trainable() {
                names.push(name.to_string());
            }
        });
        names
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Re-keys `inner` under `prefix` and appends it to `out`.
pub(crate) fn extend_prefixed<T: Scalar>(out: &mut Gradients<T>, prefix: &str, inner: Gradients<T>) {
    for (k, v) in inner {
        out.insert(join(prefix, &k), v);
    }
}
