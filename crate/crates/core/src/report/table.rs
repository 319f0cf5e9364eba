//! records.csv: one metric record per row.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Emptiness, Error, Result};
use crate::harness::{GroupTag, MetricRecord};
use crate::roi::{RoiClass, Side};

pub const RECORD_COLUMNS: [&str; 19] = [
    "subject_id",
    "session_a",
    "session_b",
    "date_a",
    "date_b",
    "roi",
    "roi_class",
    "side",
    "group_tag",
    "dice",
    "surface_dice",
    "hd95_mm",
    "vol_a_cm3",
    "vol_b_cm3",
    "vol_diff_cm3",
    "tolerance_mm",
    "undefined",
    "resample_delta_a_cm3",
    "resample_delta_b_cm3",
];

/// Six significant digits, fixed notation for magnitudes in [1e-5, 1e16).
pub fn format_sig6(value: f64) -> String {
    if !value.is_finite() {
        return value.to_string();
    }
    let value = if value == 0.0 { 0.0 } else { value };
    let sci = format!("{value:.5e}");
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    if (-5..=15).contains(&exp) {
        format!("{value:.*}", (5 - exp).max(0) as usize)
    } else {
        sci
    }
}

fn opt(value: Option<f64>) -> String {
    value.map(format_sig6).unwrap_or_default()
}

/// A records.csv row as read back from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub subject_id: String,
    pub session_a: String,
    pub session_b: String,
    pub date_a: Option<NaiveDate>,
    pub date_b: Option<NaiveDate>,
    pub roi: String,
    pub roi_class: RoiClass,
    pub side: Side,
    pub group_tag: GroupTag,
    pub dice: Option<f64>,
    pub surface_dice: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub vol_a_cm3: f64,
    pub vol_b_cm3: f64,
    pub vol_diff_cm3: f64,
    pub tolerance_mm: f64,
    pub undefined: Option<Emptiness>,
    pub resample_delta_a_cm3: Option<f64>,
    pub resample_delta_b_cm3: Option<f64>,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse {
        path: "records.csv".into(),
        message: e.to_string(),
    }
}

pub fn records_to_csv(records: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS).map_err(csv_error)?;
    for r in records {
        let m = &r.metrics;
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        let undefined = m
            .undefined
            .map(|u| match u {
                Emptiness::FirstEmpty => "first_empty",
                Emptiness::SecondEmpty => "second_empty",
                Emptiness::BothEmpty => "both_empty",
            })
            .unwrap_or_default();
        w.write_record([
            r.subject_id.clone(),
            r.session_a.clone(),
            r.session_b.clone(),
            date(r.date_a),
            date(r.date_b),
            r.roi_name.clone(),
            r.roi_class.as_str().to_string(),
            r.side.as_str().to_string(),
            r.group_tag.as_str().to_string(),
            opt(m.dice),
            opt(m.surface_dice),
            opt(m.hd95_mm),
            format_sig6(m.volume_a_cm3),
            format_sig6(m.volume_b_cm3),
            format_sig6(m.volume_diff_cm3()),
            format_sig6(m.tolerance_mm),
            undefined.to_string(),
            opt(r.resample_delta_a_cm3),
            opt(r.resample_delta_b_cm3),
        ])
        .map_err(csv_error)?;
    }
    w.into_inner()
        .map_err(|e| Error::Invariant(format!("csv buffer: {e}")))
}

pub fn parse_records_csv(bytes: &[u8]) -> Result<Vec<RecordRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(RECORD_COLUMNS) {
        return Err(Error::Parse {
            path: "records.csv".into(),
            message: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<RecordRow>, _>>()
        .map_err(csv_error)
}
