//! Two-volume comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Emptiness, Result};
use crate::harness::evaluate_volumes;
use crate::roi::{RoiRegistry, Side};
use crate::volume::LabelVolume;

pub const COMPARE_COLUMNS: [&str; 8] = [
    "roi",
    "side",
    "dice",
    "surface_dice",
    "hd95_mm",
    "vol_a_cm3",
    "vol_b_cm3",
    "vol_diff_cm3",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub roi: String,
    pub side: Side,
    pub dice: Option<f64>,
    pub surface_dice: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub vol_a_cm3: f64,
    pub vol_b_cm3: f64,
    pub vol_diff_cm3: f64,
    pub undefined: Option<Emptiness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOutput {
    pub volume_a: String,
    pub volume_b: String,
    pub tolerance_mm: f64,
    /// Whether volume B was resampled onto volume A's grid first.
    pub resampled: bool,
    pub rows: Vec<CompareRow>,
}

pub fn compare_volumes(
    a: &LabelVolume,
    b: &LabelVolume,
    registry: &RoiRegistry,
    sides: &[Side],
    tolerance_mm: f64,
) -> Result<Vec<CompareRow>> {
    Ok(evaluate_volumes(a, b, registry, sides, tolerance_mm)?
        .into_iter()
        .map(|(spec, side, m)| CompareRow {
            roi: spec.name.clone(),
            side,
            dice: m.dice,
            surface_dice: m.surface_dice,
            hd95_mm: m.hd95_mm,
            vol_a_cm3: m.volume_a_cm3,
            vol_b_cm3: m.volume_b_cm3,
            vol_diff_cm3: m.volume_diff_cm3(),
            undefined: m.undefined,
        })
        .collect())
}

/// Fixed-width text table, three decimals, `-` for undefined metrics.
pub fn format_compare_table(rows: &[CompareRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.roi.len())
        .chain([COMPARE_COLUMNS[0].len()])
        .max()
        .unwrap_or(3);
    let mut out = String::new();
    let _ = write!(
        out,
        "{:<width$}  {:<5}",
        COMPARE_COLUMNS[0], COMPARE_COLUMNS[1]
    );
    for c in &COMPARE_COLUMNS[2..] {
        let _ = write!(out, "  {c:>12}");
    }
    out.push('\n');
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"));
    for r in rows {
        let _ = write!(out, "{:<width$}  {:<5}", r.roi, r.side.as_str());
        for v in [
            cell(r.dice),
            cell(r.surface_dice),
            cell(r.hd95_mm),
            cell(Some(r.vol_a_cm3)),
            cell(Some(r.vol_b_cm3)),
            cell(Some(r.vol_diff_cm3)),
        ] {
            let _ = write!(out, "  {v:>12}");
        }
        out.push('\n');
    }
    out
}
