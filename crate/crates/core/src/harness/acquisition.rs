use serde::{Deserialize, Serialize};

use super::plan::ordered_by_subject;
use super::{SessionEntry, SessionMeta};

/// min / max / number of distinct values of one acquisition parameter.
/// All three are absent when no session reports the parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub n: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub unique: Option<usize>,
}

impl ParameterSummary {
    fn from_values(name: &str, mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let min = values.first().copied();
        let max = values.last().copied();
        values.dedup();
        ParameterSummary {
            name: name.to_string(),
            n,
            min,
            max,
            unique: (n > 0).then_some(values.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionSummary {
    pub parameters: Vec<ParameterSummary>,
    /// Days between consecutive dated sessions of each subject.
    pub test_retest_gaps_days: Vec<i64>,
}

impl AcquisitionSummary {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub fn summarize_acquisition(sessions: &[SessionMeta]) -> AcquisitionSummary {
    let entries: Vec<SessionEntry> = sessions
        .iter()
        .map(|m| SessionEntry {
            meta: m.clone(),
            path: Default::default(),
        })
        .collect();
    let mut gaps = Vec::new();
    for list in ordered_by_subject(&entries).values() {
        let dates: Vec<_> = list
            .iter()
            .filter_map(|s| s.meta.acquisition_date)
            .collect();
        gaps.extend(dates.windows(2).map(|w| (w[1] - w[0]).num_days()));
    }
    let collect = |f: &dyn Fn(&SessionMeta) -> Option<f64>| -> Vec<f64> {
        sessions.iter().filter_map(f).collect()
    };
    let parameters = vec![
        ParameterSummary::from_values("test_retest_days", gaps.iter().map(|&d| d as f64).collect()),
        ParameterSummary::from_values("echo_time_ms", collect(&|m| m.echo_time_ms)),
        ParameterSummary::from_values("repetition_time_ms", collect(&|m| m.repetition_time_ms)),
        ParameterSummary::from_values(
            "voxel_size_x_mm",
            collect(&|m| m.voxel_size_mm.map(|v| v[0])),
        ),
        ParameterSummary::from_values(
            "voxel_size_y_mm",
            collect(&|m| m.voxel_size_mm.map(|v| v[1])),
        ),
        ParameterSummary::from_values(
            "voxel_size_z_mm",
            collect(&|m| m.voxel_size_mm.map(|v| v[2])),
        ),
    ];
    AcquisitionSummary {
        parameters,
        test_retest_gaps_days: gaps,
    }
}
