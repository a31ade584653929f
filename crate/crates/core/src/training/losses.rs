//! Height regression and monotonicity losses, in millimetre units.

use crate::error::TrainError;
use crate::Scalar;

fn check<T>(pred: &[T], truth: &[T]) -> Result<(), TrainError> {
    if pred.len() != truth.len() {
        return Err(TrainError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    Ok(())
}

/// Mean squared error over frames (mm²).
pub fn loss_height<T: Scalar>(pred: &[T], truth: &[T]) -> Result<T, TrainError> {
    check(pred, truth)?;
    if pred.is_empty() {
        return Ok(T::zero());
    }
    let s: T = pred.iter().zip(truth).map(|(&p, &t)| (p - t) * (p - t)).sum();
    Ok(s / T::of_usize(pred.len()))
}

/// Sum of frame-to-frame increases, `Σ max(0, Ĥ[t+1] − Ĥ[t])`. Zero for
/// fewer than two frames.
pub fn loss_mono<T: Scalar>(pred: &[T]) -> T {
    pred.windows(2).map(|w| (w[1] - w[0]).max(T::zero())).sum()
}

pub fn loss_total<T: Scalar>(pred: &[T], truth: &[T], alpha: T) -> Result<T, TrainError> {
    Ok(loss_height(pred, truth)? + alpha * loss_mono(pred))
}

/// Gradient of [`loss_total`] with respect to every prediction. The hinge
/// contributes nothing where consecutive predictions are equal.
pub fn loss_total_grad<T: Scalar>(pred: &[T], truth: &[T], alpha: T) -> Result<Vec<T>, TrainError> {
    check(pred, truth)?;
    let n = T::of_usize(pred.len().max(1));
    let two = T::of(2.0);
    let mut g: Vec<T> = pred.iter().zip(truth).map(|(&p, &t)| two * (p - t) / n).collect();
    for i in 0..pred.len().saturating_sub(1) {
        if pred[i + 1] > pred[i] {
            g[i + 1] += alpha;
            g[i] -= alpha;
        }
    }
    Ok(g)
}
