//! Dense rank-4 tensors in batch/channel/row/column order.
//!
//! Every feature map, weight bank and gradient in the crate is a [`Tensor`].
//! Vectors such as batch-norm scales are stored with extents `(C, 1, 1, 1)`
//! and classifier scores with extents `(N, classes, 1, 1)`.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{ensure, Error, Result};
use crate::rng::Rng;

/// Storage precision of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Floating-point element type. Implemented for `f32` (training) and `f64`
/// (finite-difference gradient checks).
pub trait Scalar:
    Float + Default + AddAssign + SubAssign + MulAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const PRECISION: Precision;

    fn from_f64(v: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `C ← α·A·B + β·C` with arbitrary row/column strides.
    ///
    /// `A` is `m×k`, `B` is `k×n`, `C` is `m×n`. The slices must cover every
    /// strided element; this is checked before the call into the kernel.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

fn strided_extent(rows: usize, cols: usize, (rs, cs): (usize, usize)) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

macro_rules! impl_scalar {
    ($t:ty, $prec:expr, $kernel:path) => {
        impl Scalar for $t {
            const PRECISION: Precision = $prec;

            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                assert!(a.len() >= strided_extent(m, k, a_strides), "gemm: A too short");
                assert!(b.len() >= strided_extent(k, n, b_strides), "gemm: B too short");
                assert!(c.len() >= strided_extent(m, n, c_strides), "gemm: C too short");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the asserts above guarantee every strided access stays
                // inside the borrowed slices, and `c` is uniquely borrowed.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, Precision::F32, matrixmultiply::sgemm);
impl_scalar!(f64, Precision::F64, matrixmultiply::dgemm);

/// Extents of a rank-4 tensor: batch, channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape4 {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        let shape = Shape4 { n, c, h, w };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n > 0 && self.c > 0 && self.h > 0 && self.w > 0,
            InvalidShape,
            "all extents must be positive, got {self}"
        );
        self.n
            .checked_mul(self.c)
            .and_then(|v| v.checked_mul(self.h))
            .and_then(|v| v.checked_mul(self.w))
            .ok_or_else(|| Error::InvalidShape(format!("{self} overflows the address space")))?;
        Ok(())
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Number of elements in one channel plane.
    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Number of elements in one batch item.
    #[inline]
    pub fn item(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Shape4 {
    fn from(d: [usize; 4]) -> Self {
        Shape4 { n: d[0], c: d[1], h: d[2], w: d[3] }
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar = f32> {
    shape: Shape4,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{:?}>{}", T::PRECISION, self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl<T: Scalar> Tensor<T> {
    /// Tensor of the given shape with every element equal to `fill`.
    pub fn new(shape: impl Into<Shape4>, fill: T) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        Ok(Tensor { shape, data: vec![fill; shape.numel()] })
    }

    pub fn zeros(shape: impl Into<Shape4>) -> Result<Self> {
        Self::new(shape, T::zero())
    }

    pub fn from_vec(shape: impl Into<Shape4>, data: Vec<T>) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        ensure!(
            data.len() == shape.numel(),
            InvalidShape,
            "{} elements supplied for shape {shape}",
            data.len()
        );
        Ok(Tensor { shape, data })
    }

    /// Elements drawn independently from `Normal(mean, stddev)`.
    pub fn random_normal(shape: impl Into<Shape4>, mean: f64, stddev: f64, rng: &mut Rng) -> Result<Self> {
        ensure!(
            stddev >= 0.0 && stddev.is_finite(),
            InvalidArgument,
            "stddev must be a finite non-negative number, got {stddev}"
        );
        let shape = shape.into();
        shape.validate()?;
        let data = (0..shape.numel())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::from_f64(mean + stddev * z)
            })
            .collect();
        Ok(Tensor { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.shape.offset(n, c, y, x)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        let off = self.shape.offset(n, c, y, x);
        &mut self.data[off]
    }

    /// One channel plane of one batch item.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &mut self.data[start..start + p]
    }

    /// Same elements under different extents with equal element count.
    pub fn reshape(self, shape: impl Into<Shape4>) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        ensure!(
            shape.numel() == self.shape.numel(),
            InvalidShape,
            "cannot reshape {} into {shape}",
            self.shape
        );
        Ok(Tensor { shape, data: self.data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect() }
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Largest absolute elementwise difference; errors if shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        ensure!(
            self.shape == other.shape,
            ShapeMismatch,
            "{what}: {} vs {}",
            self.shape,
            other.shape
        );
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.expect_same_shape(other, "add")?;
        Ok(Tensor {
            shape: self.shape,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        })
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_same_shape(other, "add_assign")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Joins `self` and `other` along the channel axis, `self` first.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        let (a, b) = (self.shape, other.shape);
        ensure!(
            a.n == b.n && a.h == b.h && a.w == b.w,
            ShapeMismatch,
            "concat_channels: {a} and {b} disagree outside the channel axis"
        );
        let out_shape = Shape4 { c: a.c + b.c, ..a };
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..a.n {
            data.extend_from_slice(&self.data[n * a.item()..(n + 1) * a.item()]);
            data.extend_from_slice(&other.data[n * b.item()..(n + 1) * b.item()]);
        }
        Ok(Tensor { shape: out_shape, data })
    }

    /// Splits along the channel axis into channels `[0, at)` and `[at, c)`.
    pub fn split_channels(&self, at: usize) -> Result<(Self, Self)> {
        let s = self.shape;
        ensure!(
            at > 0 && at < s.c,
            Index,
            "split point {at} must lie strictly inside (0, {})",
            s.c
        );
        let first_shape = Shape4 { c: at, ..s };
        let second_shape = Shape4 { c: s.c - at, ..s };
        let mut first = Vec::with_capacity(first_shape.numel());
        let mut second = Vec::with_capacity(second_shape.numel());
        let cut = at * s.plane();
        for n in 0..s.n {
            let item = &self.data[n * s.item()..(n + 1) * s.item()];
            first.extend_from_slice(&item[..cut]);
            second.extend_from_slice(&item[cut..]);
        }
        Ok((Tensor { shape: first_shape, data: first }, Tensor { shape: second_shape, data: second }))
    }

    /// Items `[start, start + count)` along the batch axis.
    pub fn batch_slice(&self, start: usize, count: usize) -> Result<Self> {
        let s = self.shape;
        ensure!(
            count > 0 && start + count <= s.n,
            Index,
            "batch range {start}..{} outside 0..{}",
            start + count,
            s.n
        );
        let data = self.data[start * s.item()..(start + count) * s.item()].to_vec();
        Ok(Tensor { shape: Shape4 { n: count, ..s }, data })
    }
}

/// Elementwise sum of two equally shaped tensors.
pub fn add_elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.add(b)
}

pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.concat_channels(b)
}

pub fn split_channels<T: Scalar>(t: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    t.split_channels(at)
}
