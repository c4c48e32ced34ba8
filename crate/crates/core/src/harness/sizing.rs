//! Battery power rating from the distribution of frequency deviations.

use thiserror::Error;

use crate::domain::FrequencyTrace;
use crate::forecast::quantile;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("coverage must lie in (0.5, 1), got {0}")]
pub struct CoverageError(pub f64);

/// `sigma_f` times the `coverage` quantile of `|f_nominal - f|`, in kW.
pub fn size_bess(sigma_f: f64, trace: &FrequencyTrace, coverage: f64, f_nominal: f64) -> Result<f64, CoverageError> {
    if !(coverage > 0.5 && coverage < 1.0) {
        return Err(CoverageError(coverage));
    }
    let dev: Vec<f64> = trace.samples().iter().map(|f| (f_nominal - f).abs()).collect();
    Ok(sigma_f * quantile(&dev, coverage))
}
