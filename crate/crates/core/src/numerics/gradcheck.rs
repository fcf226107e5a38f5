use crate::error::{Error, Result};

/// Compares an analytic gradient against central differences.
///
/// Returns the largest relative error
/// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)` over all
/// coordinates of `params`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if analytic.len() != params.len() {
        return Err(Error::Shape(format!(
            "grad_check: {} params but {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("grad_check step must be positive, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let plus = f(&probe);
        probe[i] = params[i] - h;
        let minus = f(&probe);
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
