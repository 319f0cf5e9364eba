use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Mean, sample SD (n - 1) and range of at least two observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GroupStats {
    Ok(Summary),
    /// Fewer than two observations.
    Insufficient {
        n: usize,
    },
}

impl GroupStats {
    pub fn summary(&self) -> Option<&Summary> {
        match self {
            GroupStats::Ok(s) => Some(s),
            GroupStats::Insufficient { .. } => None,
        }
    }
}

pub fn describe(values: &[f64]) -> GroupStats {
    let n = values.len();
    if n < 2 {
        return GroupStats::Insufficient { n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GroupStats::Ok(Summary {
        n,
        mean,
        sd: (ss / (n - 1) as f64).sqrt(),
        min,
        max,
    })
}

/// Per-group [`describe`] of keyed observations.
pub fn group_variability<K: Ord + Clone>(observations: &[(K, f64)]) -> BTreeMap<K, GroupStats> {
    let mut groups: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in observations {
        groups.entry(k.clone()).or_default().push(*v);
    }
    groups.into_iter().map(|(k, v)| (k, describe(&v))).collect()
}
