use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Shape4, Tensor};

fn pooled_shape(s: Shape4, kernel: usize, stride: usize) -> Result<Shape4> {
    ensure!(kernel > 0 && stride > 0, InvalidArgument, "pool kernel and stride must be positive");
    ensure!(
        s.h >= kernel && s.w >= kernel,
        InvalidShape,
        "pool kernel {kernel} larger than input {}x{}",
        s.h,
        s.w
    );
    Ok(Shape4 { h: (s.h - kernel) / stride + 1, w: (s.w - kernel) / stride + 1, ..s })
}

/// Square-window average pooling without padding.
pub fn avgpool_forward<T: Scalar>(input: &Tensor<T>, kernel: usize, stride: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    let os = pooled_shape(s, kernel, stride)?;
    let mut out = Tensor::zeros(os)?;
    let norm = T::one() / T::from_f64((kernel * kernel) as f64);
    for n in 0..s.n {
        for c in 0..s.c {
            let src = input.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let mut acc = T::zero();
                    for ky in 0..kernel {
                        let row = (oy * stride + ky) * s.w + ox * stride;
                        acc += src[row..row + kernel].iter().copied().sum::<T>();
                    }
                    dst[oy * os.w + ox] = acc * norm;
                }
            }
        }
    }
    Ok(out)
}

/// Spreads each output gradient evenly over its window.
pub fn avgpool_backward<T: Scalar>(
    input_shape: Shape4,
    grad_out: &Tensor<T>,
    kernel: usize,
    stride: usize,
) -> Result<Tensor<T>> {
    let os = pooled_shape(input_shape, kernel, stride)?;
    ensure!(
        grad_out.shape() == os,
        ShapeMismatch,
        "pool grad_out {} does not match {os}",
        grad_out.shape()
    );
    let mut grad_in = Tensor::zeros(input_shape)?;
    let norm = T::one() / T::from_f64((kernel * kernel) as f64);
    for n in 0..os.n {
        for c in 0..os.c {
            let go = grad_out.plane(n, c);
            let dst = grad_in.plane_mut(n, c);
            for oy in 0..os.h {
                for ox in 0..os.w {
                    let g = go[oy * os.w + ox] * norm;
                    for ky in 0..kernel {
                        let row = (oy * stride + ky) * input_shape.w + ox * stride;
                        dst[row..row + kernel].iter_mut().for_each(|d| *d += g);
                    }
                }
            }
        }
    }
    Ok(grad_in)
}
