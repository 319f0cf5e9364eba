//! summary.json: per-(ROI, side, group) statistics of the records table.
//!
//! The summary is computed from the rows exactly as written to records.csv,
//! so re-reading that file reproduces it bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::table::RecordRow;
use crate::error::{Error, Result};
use crate::harness::PairingPolicy;
use crate::harness::{AcquisitionSummary, GroupTag};
use crate::roi::Side;
use crate::stats::{describe, GroupStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub roi: String,
    pub side: Side,
    pub group_tag: GroupTag,
    pub n_records: usize,
    pub n_undefined: usize,
    pub dice: GroupStats,
    pub surface_dice: GroupStats,
    pub hd95_mm: GroupStats,
    /// Signed session B minus session A volume.
    pub vol_diff_cm3: GroupStats,
    /// Absolute percentage volume error; its mean is the group MAPE.
    pub ape_percent: GroupStats,
    /// Volumes of the distinct sessions taking part in the group's pairs.
    pub volume_cm3: GroupStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub n_records: usize,
    pub n_pairs: usize,
    pub n_undefined: usize,
    pub records_per_group: BTreeMap<GroupTag, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub tolerance_mm: f64,
    pub policy: PairingPolicy,
    pub totals: Totals,
    pub groups: Vec<GroupSummary>,
    pub acquisition: AcquisitionSummary,
}

pub fn totals(rows: &[RecordRow]) -> Totals {
    let pairs: BTreeSet<(&str, &str, &str)> = rows
        .iter()
        .map(|r| {
            (
                r.subject_id.as_str(),
                r.session_a.as_str(),
                r.session_b.as_str(),
            )
        })
        .collect();
    let mut per_group = BTreeMap::new();
    for r in rows {
        *per_group.entry(r.group_tag).or_insert(0) += 1;
    }
    Totals {
        n_records: rows.len(),
        n_pairs: pairs.len(),
        n_undefined: rows.iter().filter(|r| r.undefined.is_some()).count(),
        records_per_group: per_group,
    }
}

/// Groups in order of first appearance of (ROI, side), then by group tag.
pub fn group_summaries(rows: &[RecordRow]) -> Vec<GroupSummary> {
    let mut order: Vec<(&str, Side)> = Vec::new();
    let mut groups: BTreeMap<(usize, GroupTag), Vec<&RecordRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.roi.as_str(), r.side);
        let idx = match order.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                order.push(key);
                order.len() - 1
            }
        };
        groups.entry((idx, r.group_tag)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((idx, tag), rows)| {
            let col = |f: &dyn Fn(&RecordRow) -> Option<f64>| -> GroupStats {
                describe(&rows.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            let mut sessions: BTreeMap<(&str, &str), f64> = BTreeMap::new();
            for r in &rows {
                sessions
                    .entry((&r.subject_id, &r.session_a))
                    .or_insert(r.vol_a_cm3);
                sessions
                    .entry((&r.subject_id, &r.session_b))
                    .or_insert(r.vol_b_cm3);
            }
            GroupSummary {
                roi: order[idx].0.to_string(),
                side: order[idx].1,
                group_tag: tag,
                n_records: rows.len(),
                n_undefined: rows.iter().filter(|r| r.undefined.is_some()).count(),
                dice: col(&|r| r.dice),
                surface_dice: col(&|r| r.surface_dice),
                hd95_mm: col(&|r| r.hd95_mm),
                vol_diff_cm3: col(&|r| Some(r.vol_diff_cm3)),
                ape_percent: col(&|r| {
                    (r.vol_a_cm3 > 0.0)
                        .then(|| 100.0 * (r.vol_b_cm3 - r.vol_a_cm3).abs() / r.vol_a_cm3)
                }),
                volume_cm3: describe(&sessions.into_values().collect::<Vec<_>>()),
            }
        })
        .collect()
}

/// Outcome of re-deriving summary.json from records.csv.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub records: usize,
    pub groups: usize,
    pub mismatches: Vec<String>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

pub fn check_summary(rows: &[RecordRow], summary: &BatchSummary) -> ConsistencyReport {
    let mut mismatches = Vec::new();
    let t = totals(rows);
    if t != summary.totals {
        mismatches.push(format!(
            "totals: summary.json has {:?}, records.csv gives {:?}",
            summary.totals, t
        ));
    }
    let groups = group_summaries(rows);
    if groups.len() != summary.groups.len() {
        mismatches.push(format!(
            "summary.json lists {} groups, records.csv gives {}",
            summary.groups.len(),
            groups.len()
        ));
    }
    for (want, got) in groups.iter().zip(&summary.groups) {
        if want != got {
            mismatches.push(format!(
                "group {} {} {}: summary.json disagrees with records.csv",
                want.roi,
                want.side,
                want.group_tag.as_str()
            ));
        }
    }
    ConsistencyReport {
        records: rows.len(),
        groups: groups.len(),
        mismatches,
    }
}

pub fn parse_summary(bytes: &[u8]) -> Result<BatchSummary> {
    serde_json::from_slice(bytes).map_err(|e| Error::Parse {
        path: "summary.json".into(),
        message: e.to_string(),
    })
}
