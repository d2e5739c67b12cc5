use crate::error::{ensure, Result};
use crate::params::{join, Gradients, ParamRole, ParamVisitor, ParamVisitorMut, Parameterized};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
/// Retention factor for running statistics: `running ← m·running + (1 − m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-channel batch normalization with learned scale and shift.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormLayer<T: Scalar = f32> {
    pub channels: usize,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub epsilon: f64,
    pub momentum: f64,
}

/// What a training-mode forward leaves behind for the backward pass.
#[derive(Clone, Debug)]
pub enum BatchNormCache<T: Scalar> {
    Training { xhat: Tensor<T>, inv_std: Vec<T> },
    Inference,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

impl<T: Scalar> BatchNormGrads<T> {
    pub fn param_gradients(&self) -> Gradients<T> {
        let mut g = Gradients::new();
        g.insert("gamma".to_string(), self.gamma.clone());
        g.insert("beta".to_string(), self.beta.clone());
        g
    }
}

impl<T: Scalar> BatchNormLayer<T> {
    /// gamma = 1, beta = 0, running mean 0, running variance 1.
    pub fn new(channels: usize) -> Result<Self> {
        let vec = |v: f64| Tensor::new([channels, 1, 1, 1], T::from_f64(v));
        Ok(BatchNormLayer {
            channels,
            gamma: vec(1.0)?,
            beta: vec(0.0)?,
            running_mean: vec(0.0)?,
            running_var: vec(1.0)?,
            epsilon: BN_EPSILON,
            momentum: BN_MOMENTUM,
        })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        ensure!(
            input.shape().c == self.channels,
            ShapeMismatch,
            "batch norm over {} channels got input {}",
            self.channels,
            input.shape()
        );
        Ok(())
    }

    /// Inference forward using the running statistics.
    pub fn forward_inference(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let s = input.shape();
        let mut out = input.clone();
        let eps = T::from_f64(self.epsilon);
        for c in 0..s.c {
            let inv_std = T::one() / (self.running_var.data()[c] + eps).sqrt();
            let scale = self.gamma.data()[c] * inv_std;
            let shift = self.beta.data()[c] - self.running_mean.data()[c] * scale;
            for n in 0..s.n {
                out.plane_mut(n, c).iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        Ok(out)
    }

    /// Training forward: normalizes by batch statistics over (n, h, w) and
    /// folds them into the running averages.
    pub fn forward_training(&mut self, input: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        self.check_input(input)?;
        let s = input.shape();
        let count = s.n * s.plane();
        ensure!(
            count >= 2,
            DegenerateBatch,
            "training-mode batch norm needs at least 2 values per channel, input {s} has {count}"
        );
        let mut xhat = input.clone();
        let mut out = input.clone();
        let mut inv_stds = Vec::with_capacity(s.c);
        let eps = T::from_f64(self.epsilon);
        let m = T::from_f64(self.momentum);
        let inv_count = T::one() / T::from_f64(count as f64);
        for c in 0..s.c {
            let mut sum = T::zero();
            for n in 0..s.n {
                sum += input.plane(n, c).iter().copied().sum::<T>();
            }
            let mean = sum * inv_count;
            let mut sq = T::zero();
            for n in 0..s.n {
                sq += input.plane(n, c).iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            }
            let var = sq * inv_count;
            let inv_std = T::one() / (var + eps).sqrt();
            let (g, b) = (self.gamma.data()[c], self.beta.data()[c]);
            for n in 0..s.n {
                let xh = xhat.plane_mut(n, c);
                xh.iter_mut().for_each(|v| *v = (*v - mean) * inv_std);
                let xh = xhat.plane(n, c);
                out.plane_mut(n, c).iter_mut().zip(xh).for_each(|(o, &x)| *o = g * x + b);
            }
            inv_stds.push(inv_std);
            let rm = &mut self.running_mean.data_mut()[c];
            *rm = m * *rm + (T::one() - m) * mean;
            let rv = &mut self.running_var.data_mut()[c];
            *rv = m * *rv + (T::one() - m) * var;
        }
        Ok((out, BatchNormCache::Training { xhat, inv_std: inv_stds }))
    }

    pub fn forward(&mut self, input: &Tensor<T>, training: bool) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        if training {
            self.forward_training(input)
        } else {
            Ok((self.forward_inference(input)?, BatchNormCache::Inference))
        }
    }

    /// Backward through the training-mode normalization, including the
    /// dependence of the batch mean and variance on every input element.
    pub fn backward(&self, cache: &BatchNormCache<T>, grad_out: &Tensor<T>) -> Result<BatchNormGrads<T>> {
        let (xhat, inv_std) = match cache {
            BatchNormCache::Training { xhat, inv_std } => (xhat, inv_std),
            BatchNormCache::Inference => {
                return Err(crate::Error::UnsupportedMode(
                    "batch-norm backward requires a training-mode forward".into(),
                ))
            }
        };
        xhat.expect_same_shape(grad_out, "batch-norm backward")?;
        let s = grad_out.shape();
        let count = T::from_f64((s.n * s.plane()) as f64);
        let mut grad_in = Tensor::zeros(s)?;
        let mut grad_gamma = Tensor::zeros([s.c, 1, 1, 1])?;
        let mut grad_beta = Tensor::zeros([s.c, 1, 1, 1])?;
        for c in 0..s.c {
            let mut sum_g = T::zero();
            let mut sum_gx = T::zero();
            for n in 0..s.n {
                for (&g, &x) in grad_out.plane(n, c).iter().zip(xhat.plane(n, c)) {
                    sum_g += g;
                    sum_gx += g * x;
                }
            }
            grad_beta.data_mut()[c] = sum_g;
            grad_gamma.data_mut()[c] = sum_gx;
            // dx = γ·σ⁻¹/N · (N·dy − Σdy − x̂·Σ(dy·x̂))
            let k = self.gamma.data()[c] * inv_std[c] / count;
            for n in 0..s.n {
                let xh = xhat.plane(n, c);
                let go = grad_out.plane(n, c);
                grad_in
                    .plane_mut(n, c)
                    .iter_mut()
                    .zip(go.iter().zip(xh))
                    .for_each(|(d, (&g, &x))| *d = k * (count * g - sum_g - x * sum_gx));
            }
        }
        Ok(BatchNormGrads { input: grad_in, gamma: grad_gamma, beta: grad_beta })
    }
}

impl<T: Scalar> Parameterized<T> for BatchNormLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "gamma"), ParamRole::NormScale, &self.gamma);
        f(&join(prefix, "beta"), ParamRole::NormShift, &self.beta);
        f(&join(prefix, "running_mean"), ParamRole::RunningMean, &self.running_mean);
        f(&join(prefix, "running_var"), ParamRole::RunningVar, &self.running_var);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&join(prefix, "gamma"), ParamRole::NormScale, &mut self.gamma);
        f(&join(prefix, "beta"), ParamRole::NormShift, &mut self.beta);
        f(&join(prefix, "running_mean"), ParamRole::RunningMean, &mut self.running_mean);
        f(&join(prefix, "running_var"), ParamRole::RunningVar, &mut self.running_var);
    }
}
