use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamRole, Parameterized};
use crate::tensor::{Scalar, Tensor};

pub const MOMENTUM: f64 = 0.9;
pub const WEIGHT_DECAY: f64 = 1e-4;

/// SGD with Nesterov momentum and L2 weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Scalar = f32> {
    pub momentum: f64,
    pub weight_decay: f64,
    /// Whether batch-norm scale and shift are decayed too.
    pub decay_bn_params: bool,
    /// One buffer per trainable record, keyed by parameter name.
    pub velocities: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Zero velocities for every trainable record of `model`.
    pub fn new<M: Parameterized<T> + ?Sized>(model: &M) -> Self {
        Self::with_hyperparams(model, MOMENTUM, WEIGHT_DECAY, false)
    }

    pub fn with_hyperparams<M: Parameterized<T> + ?Sized>(
        model: &M,
        momentum: f64,
        weight_decay: f64,
        decay_bn_params: bool,
    ) -> Self {
        let mut velocities = IndexMap::new();
        model.visit_params("", &mut |name, role, t| {
            if role.is_trainable() {
                velocities.insert(name.to_string(), Tensor::zeros(t.shape()).expect("parameter shape"));
            }
        });
        OptimizerState { momentum, weight_decay, decay_bn_params, velocities }
    }

    fn decay_for(&self, role: ParamRole) -> f64 {
        if role.is_norm() && !self.decay_bn_params {
            0.0
        } else {
            self.weight_decay
        }
    }
}

/// One Nesterov step over every trainable record:
///
/// ```text
/// g = ∇ + λ·w
/// v ← m·v + g
/// w ← w − lr·(g + m·v)
/// ```
///
/// Gradient keys, velocity keys and trainable parameter names must coincide
/// with matching extents; otherwise nothing is updated and a bookkeeping
/// error is returned.
pub fn sgd_step<T: Scalar, M: Parameterized<T> + ?Sized>(
    model: &mut M,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    let mut names = Vec::new();
    let mut problems = Vec::new();
    model.visit_params("", &mut |name, role, t| {
        if !role.is_trainable() {
            return;
        }
        names.push(name.to_string());
        match (grads.get(name), state.velocities.get(name)) {
            (Some(g), Some(v)) if g.shape() == t.shape() && v.shape() == t.shape() => {}
            (None, _) => problems.push(format!("no gradient for {name}")),
            (_, None) => problems.push(format!("no velocity for {name}")),
            (Some(g), Some(v)) => problems.push(format!(
                "{name}: parameter {}, gradient {}, velocity {}",
                t.shape(),
                g.shape(),
                v.shape()
            )),
        }
    });
    for key in grads.keys() {
        if !names.contains(key) {
            problems.push(format!("gradient for unknown parameter {key}"));
        }
    }
    if state.velocities.len() != names.len() {
        problems.push(format!("{} velocities for {} parameters", state.velocities.len(), names.len()));
    }
    if !problems.is_empty() {
        return Err(Error::Bookkeeping(problems.join("; ")));
    }

    let m = T::from_f64(state.momentum);
    let lr = T::from_f64(lr);
    let decays: Vec<T> = {
        let mut d = Vec::new();
        model.visit_params("", &mut |_, role, _| {
            if role.is_trainable() {
                d.push(T::from_f64(state.decay_for(role)));
            }
        });
        d
    };
    let velocities = &mut state.velocities;
    let mut k = 0;
    model.visit_params_mut("", &mut |name, role, w| {
        if !role.is_trainable() {
            return;
        }
        let lambda = decays[k];
        k += 1;
        let g = &grads[name];
        let v = velocities.get_mut(name).expect("checked above");
        for ((wi, &gi), vi) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            let total = gi + lambda * *wi;
            *vi = m * *vi + total;
            *wi -= lr * (total + m * *vi);
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ParamVisitor, ParamVisitorMut};

    struct Toy {
        w: Tensor<f64>,
        gamma: Tensor<f64>,
        stat: Tensor<f64>,
    }

    impl Parameterized<f64> for Toy {
        fn visit_params(&self, _: &str, f: &mut ParamVisitor<'_, f64>) {
            f("w", ParamRole::Weight, &self.w);
            f("gamma", ParamRole::NormScale, &self.gamma);
            f("stat", ParamRole::RunningMean, &self.stat);
        }

        fn visit_params_mut(&mut self, _: &str, f: &mut ParamVisitorMut<'_, f64>) {
            f("w", ParamRole::Weight, &mut self.w);
            f("gamma", ParamRole::NormScale, &mut self.gamma);
            f("stat", ParamRole::RunningMean, &mut self.stat);
        }
    }

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::new([1, 1, 1, 1], v).unwrap()
    }

    fn toy() -> Toy {
        Toy { w: scalar(1.0), gamma: scalar(1.0), stat: scalar(3.0) }
    }

    fn grads(gw: f64, gg: f64) -> Gradients<f64> {
        let mut g = Gradients::new();
        g.insert("w".into(), scalar(gw));
        g.insert("gamma".into(), scalar(gg));
        g
    }

    #[test]
    fn hand_traced_two_steps() {
        let mut model = toy();
        let mut opt = OptimizerState::with_hyperparams(&model, 0.9, 0.0, false);
        assert_eq!(opt.velocities.len(), 2);
        sgd_step(&mut model, &grads(0.5, 0.0), &mut opt, 0.1).unwrap();
        assert!((opt.velocities["w"].data()[0] - 0.5).abs() < 1e-15);
        assert!((model.w.data()[0] - 0.905).abs() < 1e-15);
        // v = 0.9·0.5 + 0.5 = 0.95; w = 0.905 − 0.1·(0.5 + 0.855) = 0.7695
        sgd_step(&mut model, &grads(0.5, 0.0), &mut opt, 0.1).unwrap();
        assert!((opt.velocities["w"].data()[0] - 0.95).abs() < 1e-15);
        assert!((model.w.data()[0] - 0.7695).abs() < 1e-15);
        assert_eq!(model.stat.data()[0], 3.0);
    }

    #[test]
    fn fixed_point_and_decay_roles() {
        let mut model = toy();
        let mut opt = OptimizerState::with_hyperparams(&model, 0.9, 0.0, false);
        sgd_step(&mut model, &grads(0.0, 0.0), &mut opt, 0.1).unwrap();
        assert_eq!((model.w.data()[0], model.gamma.data()[0]), (1.0, 1.0));

        let mut opt = OptimizerState::with_hyperparams(&model, 0.0, 0.5, false);
        sgd_step(&mut model, &grads(0.0, 0.0), &mut opt, 1.0).unwrap();
        assert_eq!(model.w.data()[0], 0.5);
        assert_eq!(model.gamma.data()[0], 1.0);

        let mut opt = OptimizerState::with_hyperparams(&model, 0.0, 0.5, true);
        sgd_step(&mut model, &grads(0.0, 0.0), &mut opt, 1.0).unwrap();
        assert_eq!(model.gamma.data()[0], 0.5);
    }

    #[test]
    fn key_mismatch_leaves_model_untouched() {
        let mut model = toy();
        let mut opt = OptimizerState::new(&model);
        let mut g = grads(1.0, 1.0);
        g.shift_remove("gamma");
        assert!(matches!(sgd_step(&mut model, &g, &mut opt, 0.1), Err(Error::Bookkeeping(_))));
        let mut g = grads(1.0, 1.0);
        g.insert("bogus".into(), scalar(1.0));
        assert!(matches!(sgd_step(&mut model, &g, &mut opt, 0.1), Err(Error::Bookkeeping(_))));
        let mut g = grads(1.0, 1.0);
        g.insert("w".into(), Tensor::zeros([2, 1, 1, 1]).unwrap());
        assert!(sgd_step(&mut model, &g, &mut opt, 0.1).is_err());
        assert_eq!(model.w.data()[0], 1.0);
    }
}
