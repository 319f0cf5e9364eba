use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plan::ordered_by_subject;
use super::{ComparisonPlan, GroupTag, MetricRecord, SessionEntry, SessionPair};
use crate::error::{Error, Result};
use crate::metrics::{pair_metrics, PairMetrics, DEFAULT_TOLERANCE_MM};
use crate::nifti::{read_grid, read_label_volume};
use crate::resample::{read_affine_transform, resample_labels, AffineTransform};
use crate::roi::{extract_mask, mask_volume_cm3, RoiRegistry, RoiSpec, Side};
use crate::volume::{Grid, LabelVolume};

/// Grid that every session is resampled onto.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceChoice {
    /// The subject's earliest session.
    FirstSession,
    /// An atlas label or intensity volume; only its grid is used.
    Atlas(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub reference: ReferenceChoice,
    /// Transform files keyed by `<subject>/<session>`, each mapping reference
    /// world coordinates to that session's world coordinates. Sessions
    /// without an entry use the identity.
    #[serde(default)]
    pub transforms: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub tolerance_mm: f64,
    pub sides: Vec<Side>,
    pub resample: Option<ResampleConfig>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            tolerance_mm: DEFAULT_TOLERANCE_MM,
            sides: vec![Side::Left, Side::Right],
            resample: None,
            jobs: None,
        }
    }
}

/// Metrics of every (ROI, side) of two volumes already on the same grid,
/// in registry order then `sides` order.
pub fn evaluate_volumes<'r>(
    a: &LabelVolume,
    b: &LabelVolume,
    registry: &'r RoiRegistry,
    sides: &[Side],
    tolerance_mm: f64,
) -> Result<Vec<(&'r RoiSpec, Side, PairMetrics)>> {
    if !a.grid().same_geometry(b.grid()) {
        return Err(Error::GridMismatch(format!(
            "dims {:?} spacing {:?} vs dims {:?} spacing {:?} (or affines differ)",
            a.dims(),
            a.spacing(),
            b.dims(),
            b.spacing()
        )));
    }
    let mut out = Vec::with_capacity(registry.len() * sides.len());
    for spec in registry.entries() {
        for &side in sides {
            let ma = extract_mask(a, spec, side);
            let mb = extract_mask(b, spec, side);
            out.push((spec, side, pair_metrics(&ma, &mb, tolerance_mm)?));
        }
    }
    Ok(out)
}

struct Resampler {
    /// Reference grid per subject.
    grids: BTreeMap<String, Grid>,
    transforms: BTreeMap<String, AffineTransform>,
}

impl Resampler {
    fn prepare(config: &ResampleConfig, plan: &ComparisonPlan) -> Result<Self> {
        let mut sessions: Vec<SessionEntry> = Vec::new();
        for p in &plan.pairs {
            for s in [&p.a, &p.b] {
                if !sessions.iter().any(|x| x.meta.key() == s.meta.key()) {
                    sessions.push(s.clone());
                }
            }
        }
        let mut grids = BTreeMap::new();
        match &config.reference {
            ReferenceChoice::Atlas(path) => {
                let grid = read_grid(path)?;
                for s in &sessions {
                    grids.insert(s.meta.subject_id.clone(), grid.clone());
                }
            }
            ReferenceChoice::FirstSession => {
                for (subject, list) in ordered_by_subject(&sessions) {
                    grids.insert(subject.to_string(), read_grid(&list[0].path)?);
                }
            }
        }
        let mut transforms = BTreeMap::new();
        for (key, path) in &config.transforms {
            if !sessions.iter().any(|s| s.meta.key() == *key) {
                return Err(Error::InvalidArgument(format!(
                    "transform {} given for session {key}, which is not in the plan",
                    path.display()
                )));
            }
            transforms.insert(key.clone(), read_affine_transform(path)?);
        }
        Ok(Resampler { grids, transforms })
    }

    fn apply(&self, session: &SessionEntry, volume: LabelVolume) -> Result<LabelVolume> {
        let grid = &self.grids[&session.meta.subject_id];
        match self.transforms.get(&session.meta.key()) {
            None if volume.grid() == grid => Ok(volume),
            None => resample_labels(&volume, &AffineTransform::identity(), grid),
            Some(t) => resample_labels(&volume, t, grid),
        }
    }
}

fn evaluate_pair(
    pair: &SessionPair,
    registry: &RoiRegistry,
    config: &EvalConfig,
    resampler: Option<&Resampler>,
) -> Result<Vec<MetricRecord>> {
    let raw_a = read_label_volume(&pair.a.path)?;
    let raw_b = read_label_volume(&pair.b.path)?;
    let (a, b, deltas) = match resampler {
        None => (raw_a, raw_b, None),
        Some(r) => {
            let a = r.apply(&pair.a, raw_a.clone())?;
            let b = r.apply(&pair.b, raw_b.clone())?;
            let mut deltas = Vec::new();
            for spec in registry.entries() {
                for &side in &config.sides {
                    let delta = |pre: &LabelVolume, post: &LabelVolume| {
                        mask_volume_cm3(&extract_mask(post, spec, side))
                            - mask_volume_cm3(&extract_mask(pre, spec, side))
                    };
                    deltas.push((delta(&raw_a, &a), delta(&raw_b, &b)));
                }
            }
            (a, b, Some(deltas))
        }
    };
    let results = evaluate_volumes(&a, &b, registry, &config.sides, config.tolerance_mm)?;
    let group_tag = GroupTag::for_sessions(&pair.a.meta, &pair.b.meta);
    Ok(results
        .into_iter()
        .enumerate()
        .map(|(i, (spec, side, metrics))| MetricRecord {
            subject_id: pair.a.meta.subject_id.clone(),
            session_a: pair.a.meta.session_id.clone(),
            session_b: pair.b.meta.session_id.clone(),
            date_a: pair.a.meta.acquisition_date,
            date_b: pair.b.meta.acquisition_date,
            roi_name: spec.name.clone(),
            roi_class: spec.class,
            side,
            group_tag,
            metrics,
            resample_delta_a_cm3: deltas.as_ref().map(|d| d[i].0),
            resample_delta_b_cm3: deltas.as_ref().map(|d| d[i].1),
        })
        .collect())
}

/// One record per (pair, ROI, side), in plan × registry × side order.
///
/// Pairs are evaluated concurrently; the output order and values do not
/// depend on the number of workers.
pub fn evaluate_plan(
    plan: &ComparisonPlan,
    registry: &RoiRegistry,
    config: &EvalConfig,
) -> Result<Vec<MetricRecord>> {
    if config.sides.is_empty() {
        return Err(Error::InvalidArgument(
            "no hemisphere sides selected".into(),
        ));
    }
    let resampler = config
        .resample
        .as_ref()
        .map(|r| Resampler::prepare(r, plan))
        .transpose()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = config.jobs {
        builder = builder.num_threads(jobs.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let per_pair: Vec<Vec<MetricRecord>> = pool.install(|| {
        plan.pairs
            .par_iter()
            .map(|pair| {
                evaluate_pair(pair, registry, config, resampler.as_ref()).map_err(|e| Error::Pair {
                    session_a: pair.a.meta.key(),
                    session_b: pair.b.meta.key(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<_>>()
    })?;
    Ok(per_pair.into_iter().flatten().collect())
}
