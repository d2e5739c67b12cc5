//! Grouped 2-D convolution (cross-correlation).
//!
//! One operation covers the three modes used by the networks: standard
//! (`groups == 1`), group (`1 < groups`), and depthwise
//! (`groups == in_channels == out_channels`). Weights have extents
//! `(out_channels, in_channels / groups, kernel_h, kernel_w)`; output channel
//! `k` belongs to group `k / (out_channels / groups)` and only sees that
//! group's input channels.
//!
//! Depthwise layers run a direct per-plane kernel. Everything else lowers to
//! im2col plus GEMM per (image, group); pointwise stride-1 layers skip the
//! im2col copy and multiply straight out of the input planes.

use crate::error::{ensure, Result};
use crate::params::{join, Gradients, ParamRole, ParamVisitor, ParamVisitorMut, Parameterized};
use crate::rng::Rng;
use crate::tensor::{Scalar, Shape4, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl ConvSpec {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        groups: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let spec = ConvSpec {
            in_channels,
            out_channels,
            groups,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            bias: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// 1×1 group convolution, stride 1, no padding.
    pub fn pointwise(in_channels: usize, out_channels: usize, groups: usize) -> Result<Self> {
        Self::new(in_channels, out_channels, groups, 1, 1, 0)
    }

    /// 3×3 depthwise convolution with padding 1.
    pub fn depthwise3x3(channels: usize, stride: usize) -> Result<Self> {
        Self::new(channels, channels, channels, 3, stride, 1)
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.in_channels > 0 && self.out_channels > 0 && self.groups > 0,
            Config,
            "channel and group counts must be positive: {self:?}"
        );
        ensure!(
            self.in_channels % self.groups == 0 && self.out_channels % self.groups == 0,
            Config,
            "groups {} must divide in_channels {} and out_channels {}",
            self.groups,
            self.in_channels,
            self.out_channels
        );
        ensure!(
            self.kernel_h > 0 && self.kernel_w > 0 && self.stride > 0,
            Config,
            "kernel and stride must be positive: {self:?}"
        );
        Ok(())
    }

    #[inline]
    pub fn in_per_group(&self) -> usize {
        self.in_channels / self.groups
    }

    #[inline]
    pub fn out_per_group(&self) -> usize {
        self.out_channels / self.groups
    }

    pub fn is_depthwise(&self) -> bool {
        self.groups == self.in_channels && self.groups == self.out_channels
    }

    fn is_plain_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }

    /// Inputs feeding one output element.
    pub fn fan_in(&self) -> usize {
        self.in_per_group() * self.kernel_h * self.kernel_w
    }

    pub fn weight_shape(&self) -> Shape4 {
        Shape4 { n: self.out_channels, c: self.in_per_group(), h: self.kernel_h, w: self.kernel_w }
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().numel()
    }

    /// `floor((in + 2·padding − kernel) / stride) + 1` per spatial axis.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        ensure!(
            ph >= self.kernel_h && pw >= self.kernel_w,
            InvalidShape,
            "padded input {ph}x{pw} is smaller than kernel {}x{}",
            self.kernel_h,
            self.kernel_w
        );
        Ok(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }

    pub fn output_shape(&self, input: Shape4) -> Result<Shape4> {
        ensure!(
            input.c == self.in_channels,
            ShapeMismatch,
            "convolution expects {} input channels, got {}",
            self.in_channels,
            input.c
        );
        let (h, w) = self.output_hw(input.h, input.w)?;
        Ok(Shape4 { n: input.n, c: self.out_channels, h, w })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T: Scalar = f32> {
    pub spec: ConvSpec,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T: Scalar> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Scalar> ConvGrads<T> {
    /// Parameter gradients keyed like [`ConvLayer::visit_params`].
    pub fn param_gradients(&self) -> Gradients<T> {
        let mut g = Gradients::new();
        g.insert("weight".to_string(), self.weight.clone());
        if let Some(b) = &self.bias {
            g.insert("bias".to_string(), b.clone());
        }
        g
    }
}

/// Output-column range for which `ox·stride + k − pad` lands inside `[0, len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    let hi = if in_len + pad > k { ((in_len - 1 + pad - k) / stride + 1).min(out_len) } else { 0 };
    (lo.min(hi), hi)
}

struct PlaneGeom {
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
}

impl PlaneGeom {
    fn new(spec: &ConvSpec, h: usize, w: usize, ho: usize, wo: usize) -> Self {
        PlaneGeom { h, w, ho, wo, kh: spec.kernel_h, kw: spec.kernel_w, stride: spec.stride, pad: spec.padding }
    }

    /// Calls `f(in_row_offset, out_row_offset, x_lo, x_hi, tap)` for every
    /// kernel tap and output row that intersects the input.
    #[inline]
    fn for_each_row(&self, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        for ky in 0..self.kh {
            for kx in 0..self.kw {
                let (x_lo, x_hi) = valid_range(self.wo, self.w, kx, self.stride, self.pad);
                if x_lo >= x_hi {
                    continue;
                }
                for oy in 0..self.ho {
                    let iy = oy * self.stride + ky;
                    if iy < self.pad || iy - self.pad >= self.h {
                        continue;
                    }
                    let in_row = (iy - self.pad) * self.w;
                    // ix = ox·stride + kx − pad; offset by x_lo so the subtraction stays unsigned
                    let in_base = in_row + x_lo * self.stride + kx - self.pad;
                    f(in_base, oy * self.wo, x_lo, x_hi, ky * self.kw + kx);
                }
            }
        }
    }
}

fn dw_forward_plane<T: Scalar>(g: &PlaneGeom, inp: &[T], ker: &[T], out: &mut [T]) {
    let s = g.stride;
    g.for_each_row(|in_base, out_row, lo, hi, tap| {
        let wv = ker[tap];
        let dst = &mut out[out_row + lo..out_row + hi];
        if s == 1 {
            let src = &inp[in_base..in_base + (hi - lo)];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += wv * v;
            }
        } else {
            for (i, d) in dst.iter_mut().enumerate() {
                *d += wv * inp[in_base + i * s];
            }
        }
    });
}

fn dw_backward_plane<T: Scalar>(g: &PlaneGeom, inp: &[T], ker: &[T], gout: &[T], gin: &mut [T], gker: &mut [T]) {
    let s = g.stride;
    g.for_each_row(|in_base, out_row, lo, hi, tap| {
        let wv = ker[tap];
        let go = &gout[out_row + lo..out_row + hi];
        let mut acc = T::zero();
        if s == 1 {
            let src = &inp[in_base..in_base + (hi - lo)];
            let dst = &mut gin[in_base..in_base + (hi - lo)];
            for ((d, &x), &gv) in dst.iter_mut().zip(src).zip(go) {
                *d += wv * gv;
                acc += x * gv;
            }
        } else {
            for (i, &gv) in go.iter().enumerate() {
                gin[in_base + i * s] += wv * gv;
                acc += inp[in_base + i * s] * gv;
            }
        }
        gker[tap] += acc;
    });
}

/// Unfolds `channels` consecutive planes into a `(channels·kh·kw) × (ho·wo)` matrix.
fn im2col<T: Scalar>(g: &PlaneGeom, planes: &[T], channels: usize, cols: &mut [T]) {
    let (plane, p, kk) = (g.h * g.w, g.ho * g.wo, g.kh * g.kw);
    cols.iter_mut().for_each(|v| *v = T::zero());
    let s = g.stride;
    for c in 0..channels {
        let inp = &planes[c * plane..(c + 1) * plane];
        let block = &mut cols[c * kk * p..(c + 1) * kk * p];
        g.for_each_row(|in_base, out_row, lo, hi, tap| {
            let dst = &mut block[tap * p + out_row + lo..tap * p + out_row + hi];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = inp[in_base + i * s];
            }
        });
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto input planes.
fn col2im<T: Scalar>(g: &PlaneGeom, cols: &[T], channels: usize, planes: &mut [T]) {
    let (plane, p, kk) = (g.h * g.w, g.ho * g.wo, g.kh * g.kw);
    let s = g.stride;
    for c in 0..channels {
        let dst = &mut planes[c * plane..(c + 1) * plane];
        let block = &cols[c * kk * p..(c + 1) * kk * p];
        g.for_each_row(|in_base, out_row, lo, hi, tap| {
            let src = &block[tap * p + out_row + lo..tap * p + out_row + hi];
            for (i, &v) in src.iter().enumerate() {
                dst[in_base + i * s] += v;
            }
        });
    }
}

impl<T: Scalar> ConvLayer<T> {
    /// Layer with weights drawn from `Normal(0, sqrt(2 / fan_in))` and a zero bias.
    pub fn init(spec: ConvSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let std = (2.0 / spec.fan_in() as f64).sqrt();
        let weight = Tensor::random_normal(spec.weight_shape(), 0.0, std, rng)?;
        let bias = if spec.bias { Some(Tensor::zeros([spec.out_channels, 1, 1, 1])?) } else { None };
        Ok(ConvLayer { spec, weight, bias })
    }

    pub fn from_weights(spec: ConvSpec, weight: Tensor<T>, bias: Option<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        ensure!(
            weight.shape() == spec.weight_shape(),
            ShapeMismatch,
            "weight extents {} do not match {}",
            weight.shape(),
            spec.weight_shape()
        );
        ensure!(
            bias.is_some() == spec.bias,
            Config,
            "bias presence does not match spec (bias enabled: {})",
            spec.bias
        );
        if let Some(b) = &bias {
            ensure!(
                b.len() == spec.out_channels,
                ShapeMismatch,
                "bias has {} entries, expected {}",
                b.len(),
                spec.out_channels
            );
        }
        Ok(ConvLayer { spec, weight, bias })
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let spec = &self.spec;
        let in_shape = input.shape();
        let out_shape = spec.output_shape(in_shape)?;
        let mut out = Tensor::zeros(out_shape)?;
        let geom = PlaneGeom::new(spec, in_shape.h, in_shape.w, out_shape.h, out_shape.w);
        let (cg, kg) = (spec.in_per_group(), spec.out_per_group());
        let (in_plane, out_plane) = (in_shape.plane(), out_shape.plane());
        let kk = spec.kernel_h * spec.kernel_w;
        let w = self.weight.data();

        if spec.is_depthwise() {
            for n in 0..in_shape.n {
                for c in 0..spec.in_channels {
                    let ker = &w[c * kk..(c + 1) * kk];
                    dw_forward_plane(&geom, input.plane(n, c), ker, out.plane_mut(n, c));
                }
            }
        } else {
            let direct = spec.is_plain_pointwise();
            let rows = cg * kk;
            let mut cols = if direct { Vec::new() } else { vec![T::zero(); rows * out_plane] };
            for n in 0..in_shape.n {
                let item_in = &input.data()[n * in_shape.item()..(n + 1) * in_shape.item()];
                let item_out_start = n * out_shape.item();
                for q in 0..spec.groups {
                    let planes = &item_in[q * cg * in_plane..(q + 1) * cg * in_plane];
                    let b: &[T] = if direct {
                        planes
                    } else {
                        im2col(&geom, planes, cg, &mut cols);
                        &cols
                    };
                    let a = &w[q * kg * rows..(q + 1) * kg * rows];
                    let c_start = item_out_start + q * kg * out_plane;
                    let c = &mut out.data_mut()[c_start..c_start + kg * out_plane];
                    T::gemm(kg, rows, out_plane, T::one(), a, (rows, 1), b, (out_plane, 1), T::zero(), c, (out_plane, 1));
                }
            }
        }

        if let Some(bias) = &self.bias {
            for n in 0..out_shape.n {
                for (k, &bv) in bias.data().iter().enumerate() {
                    out.plane_mut(n, k).iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Ok(out)
    }

    /// Gradients of `Σ grad_out ⊙ forward(input)` with respect to the input,
    /// the weights and the bias.
    pub fn backward(&self, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
        let spec = &self.spec;
        let in_shape = input.shape();
        let out_shape = spec.output_shape(in_shape)?;
        ensure!(
            grad_out.shape() == out_shape,
            ShapeMismatch,
            "grad_out {} does not match forward output {out_shape}",
            grad_out.shape()
        );
        let geom = PlaneGeom::new(spec, in_shape.h, in_shape.w, out_shape.h, out_shape.w);
        let (cg, kg) = (spec.in_per_group(), spec.out_per_group());
        let (in_plane, out_plane) = (in_shape.plane(), out_shape.plane());
        let kk = spec.kernel_h * spec.kernel_w;
        let w = self.weight.data();
        let mut grad_in = Tensor::zeros(in_shape)?;
        let mut grad_w = Tensor::zeros(spec.weight_shape())?;

        if spec.is_depthwise() {
            for n in 0..in_shape.n {
                for c in 0..spec.in_channels {
                    let ker = &w[c * kk..(c + 1) * kk];
                    let gker = &mut grad_w.data_mut()[c * kk..(c + 1) * kk];
                    let gin = &mut grad_in.data_mut()[(n * in_shape.c + c) * in_plane..(n * in_shape.c + c + 1) * in_plane];
                    dw_backward_plane(&geom, input.plane(n, c), ker, grad_out.plane(n, c), gin, gker);
                }
            }
        } else {
            let direct = spec.is_plain_pointwise();
            let rows = cg * kk;
            let mut cols = if direct { Vec::new() } else { vec![T::zero(); rows * out_plane] };
            let mut gcols = if direct { Vec::new() } else { vec![T::zero(); rows * out_plane] };
            for n in 0..in_shape.n {
                let item_in = &input.data()[n * in_shape.item()..(n + 1) * in_shape.item()];
                let go_item = &grad_out.data()[n * out_shape.item()..(n + 1) * out_shape.item()];
                for q in 0..spec.groups {
                    let planes = &item_in[q * cg * in_plane..(q + 1) * cg * in_plane];
                    let go = &go_item[q * kg * out_plane..(q + 1) * kg * out_plane];
                    let b: &[T] = if direct {
                        planes
                    } else {
                        im2col(&geom, planes, cg, &mut cols);
                        &cols
                    };
                    // dW_q (kg × rows) += dY_q (kg × P) · colsᵀ (P × rows)
                    let gw = &mut grad_w.data_mut()[q * kg * rows..(q + 1) * kg * rows];
                    T::gemm(kg, out_plane, rows, T::one(), go, (out_plane, 1), b, (1, out_plane), T::one(), gw, (rows, 1));

                    // dcols (rows × P) = W_qᵀ (rows × kg) · dY_q (kg × P)
                    let a = &w[q * kg * rows..(q + 1) * kg * rows];
                    let gin_start = (n * in_shape.c + q * cg) * in_plane;
                    let gin = &mut grad_in.data_mut()[gin_start..gin_start + cg * in_plane];
                    if direct {
                        T::gemm(rows, kg, out_plane, T::one(), a, (1, rows), go, (out_plane, 1), T::zero(), gin, (out_plane, 1));
                    } else {
                        T::gemm(rows, kg, out_plane, T::one(), a, (1, rows), go, (out_plane, 1), T::zero(), &mut gcols, (out_plane, 1));
                        col2im(&geom, &gcols, cg, gin);
                    }
                }
            }
        }

        let grad_b = match &self.bias {
            Some(_) => {
                let mut gb = Tensor::zeros([spec.out_channels, 1, 1, 1])?;
                for n in 0..out_shape.n {
                    for k in 0..spec.out_channels {
                        gb.data_mut()[k] += grad_out.plane(n, k).iter().copied().sum::<T>();
                    }
                }
                Some(gb)
            }
            None => None,
        };
        Ok(ConvGrads { input: grad_in, weight: grad_w, bias: grad_b })
    }
}

impl<T: Scalar> Parameterized<T> for ConvLayer<T> {
    fn visit_params(&self, prefix: &str, f: &mut ParamVisitor<'_, T>) {
        f(&join(prefix, "weight"), ParamRole::Weight, &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), ParamRole::Bias, b);
        }
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_, T>) {
        f(&join(prefix, "weight"), ParamRole::Weight, &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), ParamRole::Bias, b);
        }
    }
}

pub fn conv_forward<T: Scalar>(layer: &ConvLayer<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    layer.forward(input)
}

pub fn conv_backward<T: Scalar>(layer: &ConvLayer<T>, input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
    layer.backward(input, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    /// Direct six-loop cross-correlation, written independently of the
    /// im2col and depthwise paths.
    fn naive(layer: &ConvLayer<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let s = layer.spec;
        let xs = x.shape();
        let ho = (xs.h + 2 * s.padding - s.kernel_h) / s.stride + 1;
        let wo = (xs.w + 2 * s.padding - s.kernel_w) / s.stride + 1;
        let mut out = Tensor::zeros([xs.n, s.out_channels, ho, wo]).unwrap();
        let (cg, kg) = (s.in_channels / s.groups, s.out_channels / s.groups);
        for n in 0..xs.n {
            for k in 0..s.out_channels {
                let q = k / kg;
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = 0.0;
                        for ci in 0..cg {
                            for ky in 0..s.kernel_h {
                                for kx in 0..s.kernel_w {
                                    let iy = (oy * s.stride + ky) as isize - s.padding as isize;
                                    let ix = (ox * s.stride + kx) as isize - s.padding as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                                        acc += layer.weight.at(k, ci, ky, kx) * x.at(n, q * cg + ci, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        if let Some(b) = &layer.bias {
                            acc += b.data()[k];
                        }
                        *out.at_mut(n, k, oy, ox) = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn identity_pointwise() {
        let spec = ConvSpec::pointwise(2, 2, 1).unwrap();
        let w = Tensor::from_vec([2, 2, 1, 1], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let layer = ConvLayer::<f64>::from_weights(spec, w, None).unwrap();
        let x = Tensor::random_normal([2, 2, 3, 3], 0.0, 1.0, &mut Rng::new(1)).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
        let g = Tensor::random_normal(x.shape(), 0.0, 1.0, &mut Rng::new(2)).unwrap();
        assert_eq!(layer.backward(&x, &g).unwrap().input, g);
    }

    #[test]
    fn stem_shape() {
        let spec = ConvSpec::new(3, 36, 3, 3, 1, 1).unwrap();
        let layer = ConvLayer::<f32>::init(spec, &mut Rng::new(0)).unwrap();
        let x = Tensor::new([1, 3, 32, 32], 0.5).unwrap();
        assert_eq!(layer.forward(&x).unwrap().shape(), Shape4::from([1, 36, 32, 32]));
    }

    #[test]
    fn depthwise_stride2_matches_naive() {
        let spec = ConvSpec::new(4, 4, 4, 3, 2, 1).unwrap();
        let mut rng = Rng::new(5);
        let l64 = ConvLayer::<f64>::init(spec, &mut rng).unwrap();
        let x64 = Tensor::random_normal([1, 4, 6, 6], 0.0, 1.0, &mut rng).unwrap();
        let y = l64.forward(&x64).unwrap();
        assert!(y.max_abs_diff(&naive(&l64, &x64)).unwrap() <= 1e-12);

        let l32 = ConvLayer::<f32>::from_weights(spec, l64.weight.cast(), None).unwrap();
        let y32 = l32.forward(&x64.cast()).unwrap();
        assert!(y32.cast::<f64>().max_abs_diff(&naive(&l64, &x64)).unwrap() <= 1e-6);
    }

    #[test]
    fn bias_and_odd_geometry_match_naive() {
        let mut rng = Rng::new(17);
        for (ci, co, g, k, s, p, h, w) in [(6, 4, 2, 3, 2, 1, 7, 5), (3, 6, 3, 2, 1, 0, 4, 6), (4, 8, 1, 3, 3, 2, 5, 5), (2, 2, 2, 1, 2, 0, 5, 4)] {
            let spec = ConvSpec::new(ci, co, g, k, s, p).unwrap().with_bias(true);
            let mut layer = ConvLayer::<f64>::init(spec, &mut rng).unwrap();
            layer.bias = Some(Tensor::random_normal([co, 1, 1, 1], 0.0, 1.0, &mut rng).unwrap());
            let x = Tensor::random_normal([2, ci, h, w], 0.0, 1.0, &mut rng).unwrap();
            let d = layer.forward(&x).unwrap().max_abs_diff(&naive(&layer, &x)).unwrap();
            assert!(d <= 1e-12, "{spec:?}: {d}");
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let spec = ConvSpec::new(4, 4, 2, 3, 1, 1).unwrap().with_bias(true);
        let layer = ConvLayer::<f64>::init(spec, &mut Rng::new(1)).unwrap();
        let x = Tensor::random_normal([1, 4, 5, 5], 0.0, 1.0, &mut Rng::new(2)).unwrap();
        let g = layer.backward(&x, &Tensor::zeros([1, 4, 5, 5]).unwrap()).unwrap();
        assert!(g.input.data().iter().chain(g.weight.data()).chain(g.bias.unwrap().data()).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(ConvSpec::new(6, 4, 4, 1, 1, 0), Err(Error::Config(_))));
        let spec = ConvSpec::new(4, 4, 1, 3, 1, 0).unwrap();
        let layer = ConvLayer::<f32>::init(spec, &mut Rng::new(0)).unwrap();
        assert!(matches!(layer.forward(&Tensor::zeros([1, 3, 5, 5]).unwrap()), Err(Error::ShapeMismatch(_))));
        assert!(matches!(layer.forward(&Tensor::zeros([1, 4, 2, 2]).unwrap()), Err(Error::InvalidShape(_))));
        let x = Tensor::zeros([1, 4, 5, 5]).unwrap();
        assert!(matches!(layer.backward(&x, &Tensor::zeros([1, 4, 5, 5]).unwrap()), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn output_extent_formula() {
        let s1 = ConvSpec::new(8, 8, 8, 3, 1, 1).unwrap();
        let s2 = ConvSpec::new(8, 8, 8, 3, 2, 1).unwrap();
        let pw = ConvSpec::pointwise(8, 16, 4).unwrap();
        assert_eq!(s1.output_hw(32, 32).unwrap(), (32, 32));
        assert_eq!(s2.output_hw(32, 32).unwrap(), (16, 16));
        assert_eq!(s2.output_hw(16, 16).unwrap(), (8, 8));
        assert_eq!(pw.output_hw(7, 9).unwrap(), (7, 9));
    }
}
