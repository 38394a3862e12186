use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Probabilities are clamped to `[PROB_FLOOR, 1]` before the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Row-wise softmax of `[B, C]` logits.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let [_, c] = logits.dims2()?;
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    Ok(out)
}

/// Mean categorical cross-entropy of `[B, C]` probabilities.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let [b, c] = probs.dims2()?;
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for {b} rows", labels.len())));
    }
    let mut total = 0.0;
    for (row, &y) in probs.data().chunks(c).zip(labels) {
        if y >= c {
            return Err(Error::LabelOutOfRange { label: y, classes: c });
        }
        total -= row[y].clamp(PROB_FLOOR, 1.0).ln();
    }
    Ok(total / b as f64)
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(p - onehot) / B`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let [b, c] = probs.dims2()?;
    let mut g = probs.clone();
    for (row, &y) in g.data_mut().chunks_mut(c).zip(labels) {
        if y >= c {
            return Err(Error::LabelOutOfRange { label: y, classes: c });
        }
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v /= b as f64);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn softmax_basics() {
        let p = softmax(&Tensor::zeros(&[1, 4])).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.25));
        for l in [-800.0, 0.0, 3.7, 1e6] {
            let p = softmax(&Tensor::full(&[1, 2], l)).unwrap();
            assert_eq!(p.data(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn cross_entropy_values() {
        let perfect = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy(&perfect, &[0]).unwrap(), 0.0);

        let uniform = Tensor::full(&[3, 5], 0.2);
        assert_relative_eq!(cross_entropy(&uniform, &[0, 2, 4]).unwrap(), 5f64.ln(), epsilon = 1e-12);

        let p = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let expect = (2f64.ln() + 4f64.ln()) / 2.0;
        assert_relative_eq!(cross_entropy(&p, &[0, 1]).unwrap(), expect, epsilon = 1e-12);
        assert_relative_eq!(expect, 1.0397, epsilon = 1e-4);

        assert!(cross_entropy(&p, &[0, 2]).is_err());
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap();
        assert_relative_eq!(cross_entropy(&p, &[1]).unwrap(), -PROB_FLOOR.ln());
    }

    #[test]
    fn gradient_is_p_minus_onehot_over_batch() {
        let p = Tensor::new(vec![2, 2], vec![0.5, 0.5, 0.75, 0.25]).unwrap();
        let g = softmax_cross_entropy_backward(&p, &[0, 1]).unwrap();
        assert_eq!(g.data(), &[-0.25, 0.25, 0.375, -0.375]);
    }
}
