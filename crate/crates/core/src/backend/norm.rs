//! Length normalization.

use ndarray::Array1;

use crate::error::{Error, Result};

/// e / ‖e‖.
pub fn length_normalize(e: &Array1<f64>) -> Result<Array1<f64>> {
    let norm = e.dot(e).sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Numeric(format!("degenerate embedding with norm {norm}")));
    }
    Ok(e / norm)
}
