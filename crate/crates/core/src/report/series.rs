//! trend.csv: per-session volumes with the fitted line and its 95% band.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use super::table::format_sig6;
use crate::error::{Error, Result};
use crate::harness::MetricRecord;
use crate::roi::Side;
use crate::stats::{fit_trend, BandKind, TrendFit};

pub const TREND_COLUMNS: [&str; 15] = [
    "subject_id",
    "roi",
    "side",
    "session_id",
    "date",
    "years",
    "volume_cm3",
    "fitted_cm3",
    "ci_lower_cm3",
    "ci_upper_cm3",
    "slope_cm3_per_year",
    "intercept_cm3",
    "r_squared",
    "slope_se",
    "band",
];

/// Volume of one session for one (ROI, side).
#[derive(Debug, Clone, PartialEq)]
pub struct SessionVolume {
    pub session_id: String,
    pub date: Option<NaiveDate>,
    pub volume_cm3: f64,
}

/// A subject's (ROI, side) volume series in time order and its fit, when
/// at least three dated sessions with two distinct dates exist.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendSeries {
    pub subject_id: String,
    pub roi: String,
    pub side: Side,
    pub sessions: Vec<SessionVolume>,
    pub fit: Option<TrendFit>,
}

/// Series in record order of first appearance. A session's volume is taken
/// from the first record that mentions it.
pub fn trend_series(records: &[MetricRecord], band: BandKind) -> Vec<TrendSeries> {
    let mut order: Vec<(String, String, Side)> = Vec::new();
    let mut sessions: BTreeMap<usize, BTreeMap<String, SessionVolume>> = BTreeMap::new();
    for r in records {
        let key = (r.subject_id.clone(), r.roi_name.clone(), r.side);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        let list = sessions.entry(idx).or_default();
        for (id, date, vol) in [
            (&r.session_a, r.date_a, r.metrics.volume_a_cm3),
            (&r.session_b, r.date_b, r.metrics.volume_b_cm3),
        ] {
            list.entry(id.clone()).or_insert(SessionVolume {
                session_id: id.clone(),
                date,
                volume_cm3: vol,
            });
        }
    }
    order
        .into_iter()
        .enumerate()
        .map(|(idx, (subject_id, roi, side))| {
            let mut list: Vec<SessionVolume> = sessions
                .remove(&idx)
                .unwrap_or_default()
                .into_values()
                .collect();
            list.sort_by(|x, y| {
                (x.date.is_none(), x.date, &x.session_id).cmp(&(
                    y.date.is_none(),
                    y.date,
                    &y.session_id,
                ))
            });
            let dated: Vec<&SessionVolume> = list.iter().filter(|s| s.date.is_some()).collect();
            let dates: Vec<NaiveDate> = dated.iter().filter_map(|s| s.date).collect();
            let vols: Vec<f64> = dated.iter().map(|s| s.volume_cm3).collect();
            let fit = fit_trend(&dates, &vols, band).ok();
            TrendSeries {
                subject_id,
                roi,
                side,
                sessions: list,
                fit,
            }
        })
        .collect()
}

pub fn series_to_csv(series: &[TrendSeries]) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::Invariant(format!("trend csv: {e}"));
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(TREND_COLUMNS).map_err(err)?;
    for s in series {
        let mut dated = 0;
        for v in &s.sessions {
            let mut row = vec![
                s.subject_id.clone(),
                s.roi.clone(),
                s.side.as_str().to_string(),
                v.session_id.clone(),
                v.date.map(|d| d.to_string()).unwrap_or_default(),
            ];
            match (&s.fit, v.date) {
                (Some(fit), Some(_)) => {
                    let i = dated;
                    dated += 1;
                    row.push(format_sig6(fit.years[i]));
                    row.push(format_sig6(v.volume_cm3));
                    for x in [
                        fit.fitted[i],
                        fit.ci_lower[i],
                        fit.ci_upper[i],
                        fit.slope,
                        fit.intercept,
                        fit.r_squared,
                        fit.slope_se,
                    ] {
                        row.push(format_sig6(x));
                    }
                    row.push(
                        match fit.band {
                            BandKind::Mean => "mean",
                            BandKind::Observation => "observation",
                        }
                        .to_string(),
                    );
                }
                _ => {
                    row.push(String::new());
                    row.push(format_sig6(v.volume_cm3));
                    row.extend(std::iter::repeat_n(String::new(), 8));
                }
            }
            w.write_record(&row).map_err(err)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::Invariant(format!("trend csv buffer: {e}")))
}
