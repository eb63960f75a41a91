use super::tensor::{Scalar, Tensor4};
use super::NnError;

/// Mean softmax cross-entropy over the batch, with the gradient w.r.t. the
/// logits (`(softmax - one_hot) / N`). Computed in `f64` via log-sum-exp.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor4<T>, labels: &[usize]) -> Result<(f64, Tensor4<T>), NnError> {
    let k = logits.sample_len();
    if k < 2 {
        return Err(NnError::TooFewClasses("softmax_cross_entropy"));
    }
    if labels.len() != logits.n() {
        return Err(super::shape_err(
            "softmax_cross_entropy",
            format!("{} labels for batch of {}", labels.len(), logits.n()),
        ));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::Label { label: l, classes: k });
    }
    let n = logits.n() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor4::zeros(logits.shape());
    for (i, &label) in labels.iter().enumerate() {
        let z: Vec<f64> = logits.sample(i).iter().map(|v| v.f64()).collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - z[label];
        for (j, g) in grad.sample_mut(i).iter_mut().enumerate() {
            let p = (z[j] - lse).exp();
            *g = T::of((p - if j == label { 1.0 } else { 0.0 }) / n);
        }
    }
    Ok((loss / n, grad))
}

/// Per-sample class probabilities.
pub fn softmax<T: Scalar>(logits: &Tensor4<T>) -> Vec<Vec<f64>> {
    (0..logits.n())
        .map(|i| {
            let z: Vec<f64> = logits.sample(i).iter().map(|v| v.f64()).collect();
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let z = Tensor4::from_vec([1, 2, 1, 1], vec![0.3f64, 0.3]).unwrap();
        let (loss, g) = softmax_cross_entropy(&z, &[1]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g.data[0] - 0.5).abs() < 1e-12 && (g.data[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated() {
        let z = Tensor4::from_vec([1, 2, 1, 1], vec![20.0f64, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&z, &[0]).unwrap();
        assert!(loss < 1e-8);
        // stable for huge logits
        let z = Tensor4::from_vec([1, 2, 1, 1], vec![1e4f32, -1e4]).unwrap();
        let (loss, g) = softmax_cross_entropy(&z, &[1]).unwrap();
        assert!((loss - 2e4).abs() < 1e-6);
        assert!(g.is_finite());
    }

    #[test]
    fn errors() {
        let z = Tensor4::<f32>::zeros([1, 2, 1, 1]);
        assert_eq!(
            softmax_cross_entropy(&z, &[2]).unwrap_err(),
            NnError::Label { label: 2, classes: 2 }
        );
        let one = Tensor4::<f32>::zeros([1, 1, 1, 1]);
        assert!(softmax_cross_entropy(&one, &[0]).is_err());
    }
}
