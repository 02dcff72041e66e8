//! Error metrics used to compare reduced-order models.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{norm2, sqrt};

/// `‖u − u_pred‖ / ‖u‖`.
pub fn relative_error(u: &[f64], u_pred: &[f64]) -> Result<f64> {
    if u.len() != u_pred.len() {
        return Err(invalid!("length mismatch: {} vs {}", u.len(), u_pred.len()));
    }
    let reference = norm2(u);
    if reference == 0.0 {
        return Err(Error::DegenerateReference("reference field has zero norm".into()));
    }
    let diff = sqrt(u.iter().zip(u_pred).map(|(a, b)| (a - b) * (a - b)).sum());
    Ok(diff / reference)
}

/// Per-snapshot errors with their summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub errors: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
}

pub fn error_stats(errors: &[f64]) -> Result<ErrorReport> {
    if errors.is_empty() {
        return Err(invalid!("error_stats needs at least one value"));
    }
    let n = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / n;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / n;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    };
    Ok(ErrorReport {
        errors: errors.to_vec(),
        mean,
        std: sqrt(var),
        median,
    })
}

/// `e_r = (e_base − e_model) / e_base`; positive when the model improves on
/// the baseline.
pub fn improvement_ratio(e_base: f64, e_model: f64) -> Result<f64> {
    if !(e_base > 0.0) {
        return Err(Error::DegenerateReference(format!(
            "baseline error must be positive, got {}",
            e_base
        )));
    }
    Ok((e_base - e_model) / e_base)
}
