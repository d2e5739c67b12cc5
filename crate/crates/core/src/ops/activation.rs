use std::cell::Cell;

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};

thread_local! {
    static RELU_CALLS: Cell<u64> = const { Cell::new(0) };
    static SIGN_DIGEST: Cell<Option<u64>> = const { Cell::new(None) };
}

const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;

/// Starts folding the sign pattern of every ReLU input on this thread into a digest.
pub fn relu_sign_digest_begin() {
    SIGN_DIGEST.with(|d| d.set(Some(FNV_OFFSET)));
}

/// Stops recording and returns the digest. Two forwards with equal digests
/// took the same branch at every ReLU (almost surely).
pub fn relu_sign_digest_end() -> u64 {
    SIGN_DIGEST.with(|d| d.take().unwrap_or(0))
}

/// Number of forward ReLU evaluations on the current thread.
pub fn relu_calls() -> u64 {
    RELU_CALLS.with(|c| c.get())
}

/// `max(x, 0)` elementwise.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    RELU_CALLS.with(|c| c.set(c.get() + 1));
    SIGN_DIGEST.with(|d| {
        if let Some(mut h) = d.get() {
            for &v in input.data() {
                h = (h ^ (v > T::zero()) as u64).wrapping_mul(FNV_PRIME);
            }
            d.set(Some(h));
        }
    });
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes `grad_out` where `input > 0`; the gradient at exactly zero is 0.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    input.expect_same_shape(grad_out, "relu_backward")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn definition() {
        let x = Tensor::<f32>::from_vec([1, 3, 1, 1], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::new(x.shape(), 1.0).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn all_negative() {
        let x = Tensor::<f64>::new([2, 2, 2, 2], -0.3).unwrap();
        assert!(relu(&x).data().iter().all(|&v| v == 0.0));
        let g = Tensor::new(x.shape(), 5.0).unwrap();
        assert!(relu_backward(&x, &g).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sign_digest_tracks_branches() {
        let a = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![0.5, -0.5]).unwrap();
        let b = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![0.7, -0.1]).unwrap();
        let c = Tensor::<f64>::from_vec([1, 2, 1, 1], vec![-0.1, -0.1]).unwrap();
        let digest = |t: &Tensor<f64>| {
            relu_sign_digest_begin();
            relu(t);
            relu_sign_digest_end()
        };
        assert_eq!(digest(&a), digest(&b));
        assert_ne!(digest(&a), digest(&c));
        assert_eq!(relu_sign_digest_end(), 0);
    }

    #[test]
    fn counts_calls() {
        let before = relu_calls();
        let x = Tensor::<f32>::zeros([1, 1, 1, 1]).unwrap();
        relu(&x);
        relu(&x);
        assert_eq!(relu_calls() - before, 2);
    }
}
