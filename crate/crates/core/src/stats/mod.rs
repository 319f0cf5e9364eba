//! Quality filtering, volume error and longitudinal trend statistics.

mod filter;
mod trend;
mod variability;

pub use filter::{
    apply_filter, record_ape, FilterMetric, FilterOutcome, FilterReport, FilterRule, FilterScope,
};
pub use trend::{fit_trend, fit_trend_years, years_between, BandKind, TrendFit};
pub use variability::{describe, group_variability, GroupStats, Summary};

use crate::error::{Error, Result};
use crate::harness::MetricRecord;

/// Mean absolute percentage error, `100/n * Σ |pred - ref| / ref`, over
/// `(reference, predicted)` volume pairs.
pub fn mape(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<f64> {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (reference, predicted) in pairs {
        if reference <= 0.0 || !reference.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reference volume must be positive, got {reference}"
            )));
        }
        sum += ((predicted - reference) / reference).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::Insufficient("MAPE of an empty set".into()));
    }
    Ok(100.0 * sum / n as f64)
}

/// MAPE over records, with session A's volume as the reference.
pub fn volume_mape(records: &[MetricRecord]) -> Result<f64> {
    mape(
        records
            .iter()
            .map(|r| (r.metrics.volume_a_cm3, r.metrics.volume_b_cm3)),
    )
}
