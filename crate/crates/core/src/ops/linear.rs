use crate::error::{ensure, Result};
use crate::params::{join, Gradients, ParamRole, ParamVisitor, ParamVisitorMut, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Fully connected classifier: `scores = W·x + b` per batch item, where `x`
/// is the flattened `(c, h, w)` item. Weights are stored as `(out, in, 1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLayer<T: Scalar = f32> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct LinearGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearGrads<T> {
    pub fn param_gradients(&self) -> Gradients<T> {
        let mut g = Gradients::new();
        g.insert("weight".to_string(), self.weight.clone());
        g.insert("bias".to_string(), self.bias.clone());
        g
    }
}

impl<T: Scalar> LinearLayer<T> {
    pub fn init(in_features: usize, out_features: usize, rng: &mut Rng) -> Result<Self> {
        let std = (2.0 / in_features as f64).sqrt();
        Ok(LinearLayer {
            in_features,
            out_features,
            weight: Tensor::random_normal([out_features, in_features, 1, 1], 0.0, std, rng)?,
            bias: Tensor::zeros([out_features, 1, 1, 1])?,
        })
    }

    pub fn from_weights(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let ws = weight.shape();
        ensure!(
            ws.h == 1 && ws.w == 1 && bias.len() == ws.n,
            ShapeMismatch,
            "linear weight {ws} and bias of {} entries are inconsistent",
            bias.len()
        );
        Ok(LinearLayer { in_features: ws.c, out_features: ws.n, weight, bias: bias.reshape([ws.n, 1, 1, 1])? })
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<()> {
        ensure!(
            input.shape().item() == self.in_features,
            ShapeMismatch,
            "linear layer expects {} features per item, input {} has {}",
            self.in_features,
            input.shape(),
            input.shape().item()
        );
        Ok(())
    }

    /// Scores with extents `(n, out_features, 1, 1)`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(input)?;
        let n = input.shape().n;
        let (i, o) = (self.in_features, self.out_features);
        let mut out = Tensor::zeros([n, o, 1, 1])?;
        for b in 0..n {
            out.data_mut()[b * o..(b + 1) * o].copy_from_slice(self.bias.data());
        }
        // Y (n × o) = X (n × i) · Wᵀ (i × o) + Y
        T::gemm(n, i, o, T::one(), input.data(), (i, 1), self.weight.data(), (1, i), T::one(), out.data_mut(), (o, 1));
        Ok(out)
    }

    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<LinearGrads<T>> {
        self.check_input(input)?;
        let n = input.shape().n;
        let (i, o) = (self.in_features, self.out_features);
        ensure!(
            grad_out.len() == n * o,
            ShapeMismatch,
            "linear grad_out {} does not match ({n},{o},1,1)",
            grad_out.shape()
        );
        let mut grad_in = Tensor::zeros(input.shape())?;
        let mut grad_w = Tensor::zeros(self.weight.shape())?;
        let mut grad_b = Tensor::zeros(self.bias.shape())?;
        let g = grad_out.data();
        // dX (n × i) = dY (n × o) · W (o × i)
        T::gemm(n, o, i, T::one(), g, (o, 1), self.weight.data(), (i, 1), T::zero(), grad_in.data_mut(), (i, 1));
        // dW (o × i) = dYᵀ (o × n) · X (n × i)
        T::gemm(o, n, i, T::one(), g, (1, o), input.data(), (i, 1), T::zero(), grad_w.data_mut(), (i, 1));
        for b in 0..n {
            grad_b.data_mut().iter_mut().zip(&g[b * o..(b + 1) * o]).for_each(|(d, &v)| *d += v);
        }
        Ok(LinearGrads { input: grad_in, weight: grad_w, bias: grad_b })
    }
}

impl<T: Scalar> Parameterized<T> for LinearLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "weight"), ParamRole::Weight, &self.weight);
        f(&join(prefix, "bias"), ParamRole::Bias, &self.bias);
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&join(prefix, "weight"), ParamRole::Weight, &mut self.weight);
        f(&join(prefix, "bias"), ParamRole::Bias, &mut self.bias);
    }
}
