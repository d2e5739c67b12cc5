use crate::error::{ensure, Result};
use crate::tensor::{Scalar, Tensor};

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the scores (`(p − onehot) / n`). Scores have extents `(n, classes, 1, 1)`.
pub fn softmax_cross_entropy<T: Scalar>(scores: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    let s = scores.shape();
    let classes = s.item();
    ensure!(
        labels.len() == s.n,
        ShapeMismatch,
        "{} labels for a batch of {}",
        labels.len(),
        s.n
    );
    let mut grad = Tensor::zeros(s)?;
    let mut total = 0.0;
    let inv_n = 1.0 / s.n as f64;
    for (b, &label) in labels.iter().enumerate() {
        ensure!(label < classes, Index, "label {label} outside [0, {classes})");
        let row = &scores.data()[b * classes..(b + 1) * classes];
        let max = row.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v.as_f64() - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        total += z.ln() - (row[label].as_f64() - max);
        let g = &mut grad.data_mut()[b * classes..(b + 1) * classes];
        for (k, (gv, e)) in g.iter_mut().zip(&exps).enumerate() {
            let p = e / z;
            *gv = T::from_f64((p - if k == label { 1.0 } else { 0.0 }) * inv_n);
        }
    }
    Ok((total * inv_n, grad))
}

/// Index of the largest score per batch item; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(scores: &Tensor<T>) -> Vec<usize> {
    let classes = scores.shape().item();
    scores
        .data()
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_scores() {
        let s = Tensor::<f64>::zeros([1, 10, 1, 1]).unwrap();
        let (loss, _) = softmax_cross_entropy(&s, &[3]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert!((loss - 2.302585).abs() < 1e-6);
    }

    #[test]
    fn saturated() {
        let mut s = Tensor::<f32>::zeros([1, 10, 1, 1]).unwrap();
        s.data_mut()[4] = 1000.0;
        let (loss, grad) = softmax_cross_entropy(&s, &[4]).unwrap();
        assert!(loss.abs() < 1e-6);
        assert!(grad.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn label_range() {
        let s = Tensor::<f32>::zeros([1, 10, 1, 1]).unwrap();
        assert!(matches!(softmax_cross_entropy(&s, &[10]), Err(crate::Error::Index(_))));
    }

    #[test]
    fn argmax_and_shift_invariance() {
        let mut v = vec![0.1, 3.0, -1.0];
        v.extend(std::iter::repeat_n(0.0, 7));
        let s = Tensor::<f64>::from_vec([1, 10, 1, 1], v).unwrap();
        assert_eq!(argmax(&s), vec![1]);
        assert_eq!(argmax(&s.map(|x| x + 12.5)), vec![1]);
    }
}
