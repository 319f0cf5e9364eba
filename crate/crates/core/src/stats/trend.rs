use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

const DAYS_PER_YEAR: f64 = 365.25;

/// Which interval the band around the fitted line describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    /// Confidence interval of the fitted mean.
    #[default]
    Mean,
    /// Prediction interval of a new observation.
    Observation,
}

/// Ordinary least squares line through (years, volume) with a 95% band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    /// cm³ per year
    pub slope: f64,
    /// cm³ at year 0 (the first scan)
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_se: f64,
    pub band: BandKind,
    pub years: Vec<f64>,
    pub fitted: Vec<f64>,
    pub ci_lower: Vec<f64>,
    pub ci_upper: Vec<f64>,
}

impl TrendFit {
    pub fn n(&self) -> usize {
        self.years.len()
    }

    pub fn predict(&self, years: f64) -> f64 {
        self.intercept + self.slope * years
    }
}

pub fn years_between(start: NaiveDate, date: NaiveDate) -> f64 {
    (date - start).num_days() as f64 / DAYS_PER_YEAR
}

/// Fits volume against years since the earliest date.
pub fn fit_trend(dates: &[NaiveDate], volumes: &[f64], band: BandKind) -> Result<TrendFit> {
    let start = dates
        .iter()
        .min()
        .copied()
        .ok_or_else(|| Error::Insufficient("trend needs at least 3 time points".into()))?;
    let years: Vec<f64> = dates.iter().map(|&d| years_between(start, d)).collect();
    fit_trend_years(&years, volumes, band)
}

pub fn fit_trend_years(years: &[f64], volumes: &[f64], band: BandKind) -> Result<TrendFit> {
    let n = years.len();
    if n != volumes.len() {
        return Err(Error::InvalidArgument(format!(
            "{n} time points but {} volumes",
            volumes.len()
        )));
    }
    if n < 3 {
        return Err(Error::Insufficient(format!(
            "trend needs at least 3 time points, got {n}"
        )));
    }
    if years.iter().chain(volumes).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite trend input".into()));
    }
    let nf = n as f64;
    let mean_x = years.iter().sum::<f64>() / nf;
    let mean_y = volumes.iter().sum::<f64>() / nf;
    let sxx: f64 = years.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::Insufficient("all time points identical".into()));
    }
    let constant = volumes.iter().all(|&v| v == volumes[0]);
    let (slope, intercept) = if constant {
        (0.0, volumes[0])
    } else {
        let sxy: f64 = years
            .iter()
            .zip(volumes)
            .map(|(x, y)| (x - mean_x) * (y - mean_y))
            .sum();
        let slope = sxy / sxx;
        (slope, mean_y - slope * mean_x)
    };
    let fitted: Vec<f64> = years.iter().map(|x| intercept + slope * x).collect();
    let ss_res: f64 = volumes
        .iter()
        .zip(&fitted)
        .map(|(y, f)| (y - f) * (y - f))
        .sum();
    let ss_tot: f64 = volumes.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let r_squared = if constant || ss_tot == 0.0 {
        0.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    let dof = nf - 2.0;
    let s = (ss_res / dof).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Invariant(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let extra = match band {
        BandKind::Mean => 0.0,
        BandKind::Observation => 1.0,
    };
    let half: Vec<f64> = years
        .iter()
        .map(|x| t * s * (extra + 1.0 / nf + (x - mean_x) * (x - mean_x) / sxx).sqrt())
        .collect();
    Ok(TrendFit {
        slope,
        intercept,
        r_squared,
        slope_se: s / sxx.sqrt(),
        band,
        ci_lower: fitted.iter().zip(&half).map(|(f, h)| f - h).collect(),
        ci_upper: fitted.iter().zip(&half).map(|(f, h)| f + h).collect(),
        years: years.to_vec(),
        fitted,
    })
}
