use super::real::Real;
use crate::error::{Error, Result};

/// Mean squared error and its gradient with respect to `preds`.
pub fn mse_loss<T: Real>(preds: &[T], targets: &[T]) -> Result<(T, Vec<T>)> {
    if preds.is_empty() {
        return Err(Error::Domain("MSE of an empty batch".into()));
    }
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    let n = T::lit(preds.len() as f64);
    let loss = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (*p - *t) * (*p - *t))
        .sum::<T>()
        / n;
    let grad = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| T::lit(2.0) * (*p - *t) / n)
        .collect();
    Ok((loss, grad))
}

/// Absolute pitch error in cents for an MSE in semitones squared.
pub fn cents_from_mse(mse: f64) -> Result<f64> {
    if !(mse >= 0.0) || !mse.is_finite() {
        return Err(Error::Domain(format!(
            "MSE must be a finite non-negative number, got {mse}"
        )));
    }
    Ok(100.0 * mse.sqrt())
}
