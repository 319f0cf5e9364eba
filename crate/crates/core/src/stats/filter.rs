use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::MetricRecord;
use crate::percentile::percentile;
use crate::roi::RoiClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMetric {
    Dice,
    SurfaceDice,
}

impl FilterMetric {
    pub fn value(self, record: &MetricRecord) -> Option<f64> {
        match self {
            FilterMetric::Dice => record.metrics.dice,
            FilterMetric::SurfaceDice => record.metrics.surface_dice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterScope {
    Cortical,
    Subcortical,
    All,
}

impl FilterScope {
    pub fn contains(self, class: RoiClass) -> bool {
        match self {
            FilterScope::All => true,
            FilterScope::Cortical => class == RoiClass::Cortical,
            FilterScope::Subcortical => class == RoiClass::Subcortical,
        }
    }
}

/// Drop in-scope records whose metric is below `threshold` or undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterRule {
    pub metric: FilterMetric,
    pub threshold: f64,
    pub scope: FilterScope,
}

impl FilterRule {
    pub fn new(metric: FilterMetric, threshold: f64, scope: FilterScope) -> Result<Self> {
        let rule = FilterRule {
            metric,
            threshold,
            scope,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidArgument(format!(
                "filter threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    /// The three quality rules used for subcortical structures:
    /// Surface Dice 0.92, Surface Dice 0.90 and Dice 0.80.
    pub fn standard_set() -> Vec<FilterRule> {
        vec![
            FilterRule {
                metric: FilterMetric::SurfaceDice,
                threshold: 0.92,
                scope: FilterScope::Subcortical,
            },
            FilterRule {
                metric: FilterMetric::SurfaceDice,
                threshold: 0.90,
                scope: FilterScope::Subcortical,
            },
            FilterRule {
                metric: FilterMetric::Dice,
                threshold: 0.80,
                scope: FilterScope::Subcortical,
            },
        ]
    }
}

/// Effect of one rule on the in-scope records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub rule: FilterRule,
    pub structures_total: usize,
    pub structures_removed: usize,
    /// Removed because the metric was undefined (an empty mask).
    pub removed_undefined: usize,
    pub percent_filtered: f64,
    pub mape_p75: Option<f64>,
    pub mape_p95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// Passing in-scope records and every out-of-scope record, in input order.
    pub retained: Vec<MetricRecord>,
    pub removed: Vec<MetricRecord>,
    pub report: FilterReport,
}

/// Absolute percentage volume error of a record, session A as reference.
pub fn record_ape(record: &MetricRecord) -> Option<f64> {
    let (va, vb) = (record.metrics.volume_a_cm3, record.metrics.volume_b_cm3);
    (va > 0.0).then(|| 100.0 * (vb - va).abs() / va)
}

/// Splits `records` by `rule`. Records outside the rule's scope are kept and
/// do not enter the report.
pub fn apply_filter(records: &[MetricRecord], rule: &FilterRule) -> Result<FilterOutcome> {
    rule.validate()?;
    if records.is_empty() {
        return Err(Error::Insufficient("no records to filter".into()));
    }
    let mut retained = Vec::new();
    let mut removed = Vec::new();
    let mut total = 0;
    let mut undefined = 0;
    let mut retained_ape = Vec::new();
    for r in records {
        if !rule.scope.contains(r.roi_class) {
            retained.push(r.clone());
            continue;
        }
        total += 1;
        match rule.metric.value(r) {
            None => {
                undefined += 1;
                removed.push(r.clone());
            }
            Some(v) if v < rule.threshold => removed.push(r.clone()),
            Some(_) => {
                retained_ape.extend(record_ape(r));
                retained.push(r.clone());
            }
        }
    }
    let report = FilterReport {
        rule: *rule,
        structures_total: total,
        structures_removed: removed.len(),
        removed_undefined: undefined,
        percent_filtered: if total == 0 {
            0.0
        } else {
            100.0 * removed.len() as f64 / total as f64
        },
        mape_p75: percentile(&retained_ape, 75.0),
        mape_p95: percentile(&retained_ape, 95.0),
    };
    Ok(FilterOutcome {
        retained,
        removed,
        report,
    })
}
