//! Dataset discovery, session pairing and per-ROI evaluation.

mod acquisition;
mod evaluate;
mod plan;
mod scan;

use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use acquisition::{summarize_acquisition, AcquisitionSummary, ParameterSummary};
pub use evaluate::{evaluate_plan, evaluate_volumes, EvalConfig, ReferenceChoice, ResampleConfig};
pub use plan::{build_plan, ComparisonPlan, PairingPolicy, SessionPair};
pub use scan::{scan_dataset, DatasetLayout};

use crate::metrics::PairMetrics;
use crate::roi::{RoiClass, Side};

/// Per-session metadata, from BIDS entities, the JSON sidecar and the header.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionMeta {
    pub subject_id: String,
    pub session_id: String,
    pub acquisition_date: Option<NaiveDate>,
    pub site_tag: Option<String>,
    pub scanner_tag: Option<String>,
    pub echo_time_ms: Option<f64>,
    pub repetition_time_ms: Option<f64>,
    pub voxel_size_mm: Option<[f64; 3]>,
}

impl SessionMeta {
    pub fn new(subject_id: impl Into<String>, session_id: impl Into<String>) -> Self {
        SessionMeta {
            subject_id: subject_id.into(),
            session_id: session_id.into(),
            ..SessionMeta::default()
        }
    }

    /// `<subject>/<session>`, the key used for per-session settings.
    pub fn key(&self) -> String {
        format!("{}/{}", self.subject_id, self.session_id)
    }
}

/// A session and the label volume that holds its segmentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub meta: SessionMeta,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTag {
    WithinScanner,
    CrossScanner,
    Unknown,
}

impl GroupTag {
    /// Within-scanner iff both sessions carry the same non-empty scanner tag.
    pub fn for_sessions(a: &SessionMeta, b: &SessionMeta) -> GroupTag {
        let tag = |m: &SessionMeta| m.scanner_tag.clone().filter(|t| !t.trim().is_empty());
        match (tag(a), tag(b)) {
            (Some(x), Some(y)) if x == y => GroupTag::WithinScanner,
            (Some(_), Some(_)) => GroupTag::CrossScanner,
            _ => GroupTag::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupTag::WithinScanner => "within_scanner",
            GroupTag::CrossScanner => "cross_scanner",
            GroupTag::Unknown => "unknown",
        }
    }

    pub fn parse(s: &str) -> Option<GroupTag> {
        match s {
            "within_scanner" => Some(GroupTag::WithinScanner),
            "cross_scanner" => Some(GroupTag::CrossScanner),
            "unknown" => Some(GroupTag::Unknown),
            _ => None,
        }
    }
}

/// One (session pair, ROI, side) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub subject_id: String,
    pub session_a: String,
    pub session_b: String,
    pub date_a: Option<NaiveDate>,
    pub date_b: Option<NaiveDate>,
    pub roi_name: String,
    pub roi_class: RoiClass,
    pub side: Side,
    pub group_tag: GroupTag,
    pub metrics: PairMetrics,
    /// Post- minus pre-resampling ROI volume of session A, when resampled.
    pub resample_delta_a_cm3: Option<f64>,
    pub resample_delta_b_cm3: Option<f64>,
}
