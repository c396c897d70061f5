use super::tape::{log_softmax_slice, softmax_slice, LOG_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    softmax_slice(logits)
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    log_softmax_slice(logits)
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Token-mean negative log likelihood of `targets` under per-step
/// probability vectors. A target with zero probability is an error; tiny
/// positive probabilities are floored at `1e-12`.
pub fn nll_loss<T: Scalar>(step_probs: &[Vec<T>], targets: &[usize]) -> Result<T> {
    if step_probs.len() != targets.len() {
        return Err(Error::Shape { op: "nll_loss", expected: vec![targets.len()], got: vec![step_probs.len()] });
    }
    if targets.is_empty() {
        return Err(Error::Empty("nll_loss"));
    }
    let floor = T::of(LOG_FLOOR);
    let mut total = T::zero();
    for (t, (probs, &target)) in step_probs.iter().zip(targets).enumerate() {
        let p = *probs.get(target).ok_or(Error::Shape { op: "nll_loss target", expected: vec![probs.len()], got: vec![target] })?;
        if !(p > T::zero()) {
            return Err(Error::NonFinite(format!("zero probability for target {target} at step {t}")));
        }
        total -= p.max(floor).ln();
    }
    Ok(total / T::of_usize(targets.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nll_examples() {
        let perfect = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        assert_eq!(nll_loss(&perfect, &[1, 0]).unwrap(), 0.0);
        let uniform = vec![vec![0.25; 4]; 2];
        assert!((nll_loss(&uniform, &[0, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);
        // -(ln 0.7 + ln 0.2) / 2
        let toy = vec![vec![0.7, 0.2, 0.1], vec![0.5, 0.2, 0.3]];
        let want = -(0.7f64.ln() + 0.2f64.ln()) / 2.0;
        assert!((nll_loss(&toy, &[0, 1]).unwrap() - want).abs() < 1e-15);
        assert!(nll_loss(&perfect, &[0, 0]).is_err());
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn softmax_normalized_and_shift_invariant(xs in proptest::collection::vec(-30.0f64..30.0, 1..20), c in -100.0f64..100.0) {
            let p = softmax(&xs);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
