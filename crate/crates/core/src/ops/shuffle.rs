use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

/// Source channel for each output channel: with `s` sections of `m = c / s`
/// channels, output `j·s + i` takes input `i·m + j`.
pub fn shuffle_permutation(channels: usize, sections: usize) -> Result<Vec<usize>> {
    ensure!(
        sections > 0 && channels % sections == 0,
        ShapeMismatch,
        "{channels} channels cannot be split into {sections} sections"
    );
    let m = channels / sections;
    let mut perm = vec![0; channels];
    for i in 0..sections {
        for j in 0..m {
            perm[j * sections + i] = i * m + j;
        }
    }
    Ok(perm)
}

fn gather<T: Scalar>(input: &Tensor<T>, perm: &[usize]) -> Result<Tensor<T>> {
    let s = input.shape();
    let mut out = Tensor::zeros(s)?;
    for n in 0..s.n {
        for (dst, &src) in perm.iter().enumerate() {
            out.plane_mut(n, dst).copy_from_slice(input.plane(n, src));
        }
    }
    Ok(out)
}

/// Interleaves `sections` equal channel sections (reshape `(s, m)` → transpose).
pub fn channel_shuffle<T: Scalar>(input: &Tensor<T>, sections: usize) -> Result<Tensor<T>> {
    let perm = shuffle_permutation(input.shape().c, sections)?;
    gather(input, &perm)
}

/// Inverse permutation of [`channel_shuffle`], used for its backward pass.
pub fn channel_shuffle_backward<T: Scalar>(grad_out: &Tensor<T>, sections: usize) -> Result<Tensor<T>> {
    let perm = shuffle_permutation(grad_out.shape().c, sections)?;
    let mut inverse = vec![0; perm.len()];
    for (dst, &src) in perm.iter().enumerate() {
        inverse[src] = dst;
    }
    gather(grad_out, &inverse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn interleaves_two_sections() {
        let x = Tensor::<f32>::from_vec([1, 4, 1, 1], vec![10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(channel_shuffle(&x, 2).unwrap().data(), &[10.0, 30.0, 20.0, 40.0]);
    }

    #[test]
    fn twelve_channel_permutation() {
        assert_eq!(shuffle_permutation(12, 2).unwrap(), vec![0, 6, 1, 7, 2, 8, 3, 9, 4, 10, 5, 11]);
    }

    #[test]
    fn inverse_and_complement() {
        let x = Tensor::<f64>::random_normal([2, 12, 2, 2], 0.0, 1.0, &mut Rng::new(1)).unwrap();
        for s in [1, 2, 3, 4, 6, 12] {
            let y = channel_shuffle(&x, s).unwrap();
            assert_eq!(channel_shuffle_backward(&y, s).unwrap(), x);
            assert_eq!(channel_shuffle(&y, 12 / s).unwrap(), x);
        }
    }

    #[test]
    fn divisibility() {
        let x = Tensor::<f32>::zeros([1, 5, 1, 1]).unwrap();
        assert!(channel_shuffle(&x, 2).is_err());
    }
}
