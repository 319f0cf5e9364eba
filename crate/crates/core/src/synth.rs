//! Seeded synthetic label-map datasets with known perturbations.
//!
//! Every (ROI, side) becomes one blob in its own lattice cell. Each session
//! starts from the same clean volume; perturbations listed for a session are
//! applied to that session only, so the ground truth of every pair is known.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::SessionMeta;
use crate::mask::BinaryMask;
use crate::nifti::write_label_volume;
use crate::oracle;
use crate::roi::{RoiRegistry, Side};
use crate::volume::{Grid, LabelVolume};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobShape {
    /// Voxels within `radius` voxels of the cell centre.
    Ball { radius: f64 },
    /// An axis-aligned box of `size` voxels.
    Box { size: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRoi {
    pub name: String,
    pub side: Side,
    pub shape: BlobShape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Translate the blob by whole voxels.
    Shift { offset: [i64; 3] },
    /// Peel `shells` complete boundary layers.
    Erode { shells: usize },
    /// Toggle `count` random voxels on or next to the boundary.
    NoiseFlips { count: usize },
    /// Remove random boundary voxels until the blob's Surface Dice against
    /// the clean blob (exhaustive evaluation) drops below `below`.
    Corrupt { below: f64, tolerance_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// 1-based session number.
    pub session: usize,
    pub roi: String,
    pub side: Side,
    #[serde(flatten)]
    pub kind: PerturbationKind,
}

fn default_subject() -> String {
    "01".into()
}
fn default_spacing() -> [f64; 3] {
    [1.0; 3]
}
fn default_margin() -> usize {
    4
}
fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}
fn default_interval() -> i64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_subject")]
    pub subject_id: String,
    pub sessions: usize,
    #[serde(default = "default_spacing")]
    pub spacing: [f64; 3],
    /// Empty means every registry ROI, both sides, as radius-4 balls.
    #[serde(default)]
    pub rois: Vec<SynthRoi>,
    /// Background voxels on each side of a blob within its cell.
    #[serde(default = "default_margin")]
    pub margin: usize,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
    #[serde(default = "default_interval")]
    pub interval_days: i64,
    /// Scanner tag per session, cycled; empty leaves tags unset.
    #[serde(default)]
    pub scanner_tags: Vec<String>,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

impl SynthSpec {
    pub fn new(sessions: usize) -> Self {
        SynthSpec {
            subject_id: default_subject(),
            sessions,
            spacing: default_spacing(),
            rois: Vec::new(),
            margin: default_margin(),
            start_date: default_start(),
            interval_days: default_interval(),
            scanner_tags: Vec::new(),
            perturbations: Vec::new(),
        }
    }

    pub fn session_id(&self, session: usize) -> String {
        format!("{session:02}")
    }
}

/// One applied perturbation and its measured effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedPerturbation {
    pub session_id: String,
    pub roi: String,
    pub side: Side,
    pub label: u32,
    #[serde(flatten)]
    pub kind: PerturbationKind,
    pub voxels_before: usize,
    pub voxels_after: usize,
    /// Exhaustive Surface Dice against the clean blob, for `corrupt`.
    pub surface_dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub blobs: Vec<BlobPlacement>,
    pub perturbations: Vec<AppliedPerturbation>,
    pub spec: SynthSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobPlacement {
    pub roi: String,
    pub side: Side,
    pub label: u32,
    pub center: [usize; 3],
    pub voxels: usize,
}

#[derive(Debug, Clone)]
pub struct SynthSession {
    pub meta: SessionMeta,
    pub volume: LabelVolume,
}

struct Blob {
    roi: String,
    side: Side,
    label: u32,
    center: [usize; 3],
    voxels: Vec<[usize; 3]>,
}

fn resolve_rois(spec: &SynthSpec, registry: &RoiRegistry) -> Result<Vec<(SynthRoi, u32)>> {
    let rois: Vec<SynthRoi> = if spec.rois.is_empty() {
        registry
            .entries()
            .iter()
            .flat_map(|r| {
                [Side::Left, Side::Right].map(|side| SynthRoi {
                    name: r.name.clone(),
                    side,
                    shape: BlobShape::Ball { radius: 4.0 },
                })
            })
            .collect()
    } else {
        spec.rois.clone()
    };
    let mut seen = BTreeSet::new();
    rois.into_iter()
        .map(|roi| {
            let entry = registry.get(&roi.name)?;
            let ids = entry.ids(roi.side);
            let label = match roi.side {
                Side::Both => None,
                _ => ids.iter().next().copied(),
            }
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{} {}: synthetic blobs need a single-hemisphere label",
                    roi.name, roi.side
                ))
            })?;
            if !seen.insert(label) {
                return Err(Error::InvalidArgument(format!(
                    "{} {} listed twice",
                    roi.name, roi.side
                )));
            }
            Ok((roi, label))
        })
        .collect()
}

fn shape_extent(shape: &BlobShape) -> Result<[usize; 3]> {
    match shape {
        BlobShape::Ball { radius } if radius.is_finite() && *radius >= 0.0 => {
            let d = 2 * radius.floor() as usize + 1;
            Ok([d; 3])
        }
        BlobShape::Box { size } if size.iter().all(|&s| s > 0) => Ok(*size),
        other => Err(Error::InvalidArgument(format!(
            "invalid blob shape {other:?}"
        ))),
    }
}

fn shape_voxels(shape: &BlobShape, center: [usize; 3]) -> Vec<[usize; 3]> {
    match shape {
        BlobShape::Ball { radius } => {
            let r = radius.floor() as i64;
            let mut out = Vec::new();
            for dz in -r..=r {
                for dy in -r..=r {
                    for dx in -r..=r {
                        if ((dx * dx + dy * dy + dz * dz) as f64) <= radius * radius {
                            out.push([
                                (center[0] as i64 + dx) as usize,
                                (center[1] as i64 + dy) as usize,
                                (center[2] as i64 + dz) as usize,
                            ]);
                        }
                    }
                }
            }
            out
        }
        BlobShape::Box { size } => {
            let lo = [0, 1, 2].map(|a| center[a] - size[a] / 2);
            let mut out = Vec::new();
            for z in lo[2]..lo[2] + size[2] {
                for y in lo[1]..lo[1] + size[1] {
                    for x in lo[0]..lo[0] + size[0] {
                        out.push([x, y, z]);
                    }
                }
            }
            out
        }
    }
}

fn layout(spec: &SynthSpec, rois: &[(SynthRoi, u32)]) -> Result<([usize; 3], Vec<Blob>)> {
    let m = rois.len();
    if m == 0 {
        return Err(Error::InvalidArgument("no ROIs to synthesise".into()));
    }
    let mut extent = [1usize; 3];
    for (roi, _) in rois {
        let e = shape_extent(&roi.shape)?;
        for a in 0..3 {
            extent[a] = extent[a].max(e[a]);
        }
    }
    let cell = extent.map(|e| e + 2 * spec.margin);
    let nx = (m as f64).cbrt().ceil() as usize;
    let ny = ((m as f64) / nx as f64).sqrt().ceil() as usize;
    let nz = m.div_ceil(nx * ny);
    let counts = [nx, ny, nz];
    let dims = [0, 1, 2].map(|a| cell[a] * counts[a]);
    let blobs = rois
        .iter()
        .enumerate()
        .map(|(i, (roi, label))| {
            let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
            let center = [0, 1, 2].map(|a| c[a] * cell[a] + cell[a] / 2);
            Blob {
                roi: roi.name.clone(),
                side: roi.side,
                label: *label,
                center,
                voxels: shape_voxels(&roi.shape, center),
            }
        })
        .collect();
    Ok((dims, blobs))
}

fn to_mask(dims: [usize; 3], spacing: [f64; 3], voxels: &BTreeSet<[usize; 3]>) -> BinaryMask {
    let mut m = BinaryMask::empty(dims, spacing).expect("valid synthetic grid");
    for v in voxels {
        m.set(v[0], v[1], v[2], true);
    }
    m
}

fn neighbours(v: [usize; 3], dims: [usize; 3]) -> impl Iterator<Item = Option<[usize; 3]>> {
    const OFFSETS: [[i64; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    OFFSETS.into_iter().map(move |o| {
        let p = [0, 1, 2].map(|a| v[a] as i64 + o[a]);
        (0..3)
            .all(|a| p[a] >= 0 && (p[a] as usize) < dims[a])
            .then(|| p.map(|c| c as usize))
    })
}

fn boundary(set: &BTreeSet<[usize; 3]>, dims: [usize; 3]) -> Vec<[usize; 3]> {
    set.iter()
        .copied()
        .filter(|&v| neighbours(v, dims).any(|n| n.is_none_or(|n| !set.contains(&n))))
        .collect()
}

fn perturb(
    kind: &PerturbationKind,
    clean: &BTreeSet<[usize; 3]>,
    current: BTreeSet<[usize; 3]>,
    dims: [usize; 3],
    spacing: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Result<(BTreeSet<[usize; 3]>, Option<f64>)> {
    let mut set = current;
    match kind {
        PerturbationKind::Shift { offset } => {
            let mut out = BTreeSet::new();
            for v in &set {
                let p = [0, 1, 2].map(|a| v[a] as i64 + offset[a]);
                if (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < dims[a]) {
                    out.insert(p.map(|c| c as usize));
                }
            }
            Ok((out, None))
        }
        PerturbationKind::Erode { shells } => {
            for _ in 0..*shells {
                for v in boundary(&set, dims) {
                    set.remove(&v);
                }
            }
            Ok((set, None))
        }
        PerturbationKind::NoiseFlips { count } => {
            for _ in 0..*count {
                let edge = boundary(&set, dims);
                if edge.is_empty() {
                    break;
                }
                let v = edge[rng.random_range(0..edge.len())];
                if rng.random_bool(0.5) && edge.len() > 1 {
                    set.remove(&v);
                } else {
                    let outside: Vec<[usize; 3]> = neighbours(v, dims)
                        .flatten()
                        .filter(|n| !set.contains(n))
                        .collect();
                    if let Some(n) = outside.choose(rng) {
                        set.insert(*n);
                    }
                }
            }
            Ok((set, None))
        }
        PerturbationKind::Corrupt {
            below,
            tolerance_mm,
        } => {
            let clean_mask = to_mask(dims, spacing, clean);
            for _ in 0..10_000 {
                let sd =
                    oracle::surface_dice(&clean_mask, &to_mask(dims, spacing, &set), *tolerance_mm);
                match sd {
                    Some(v) if v < *below => return Ok((set, Some(v))),
                    Some(_) => {}
                    None => break,
                }
                let mut edge = boundary(&set, dims);
                edge.shuffle(rng);
                let take = edge.len().div_ceil(3);
                if take >= set.len() {
                    break;
                }
                for v in edge.into_iter().take(take) {
                    set.remove(&v);
                }
            }
            Err(Error::InvalidArgument(format!(
                "could not corrupt blob below surface dice {below}"
            )))
        }
    }
}

/// Builds every session in memory.
pub fn synthesize(
    spec: &SynthSpec,
    registry: &RoiRegistry,
    seed: u64,
) -> Result<(Vec<SynthSession>, SynthManifest)> {
    if spec.sessions == 0 {
        return Err(Error::InvalidArgument(
            "at least one session required".into(),
        ));
    }
    let rois = resolve_rois(spec, registry)?;
    let (dims, blobs) = layout(spec, &rois)?;
    let grid = Grid::axis_aligned(dims, spec.spacing)?;
    for p in &spec.perturbations {
        registry.get(&p.roi)?;
        if p.session == 0 || p.session > spec.sessions {
            return Err(Error::InvalidArgument(format!(
                "perturbation session {} outside 1..={}",
                p.session, spec.sessions
            )));
        }
        if !blobs
            .iter()
            .any(|b| b.roi.eq_ignore_ascii_case(&p.roi) && b.side == p.side)
        {
            return Err(Error::RoiNotFound(format!(
                "{} {} (not synthesised)",
                p.roi, p.side
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = Vec::with_capacity(spec.sessions);
    let mut applied = Vec::new();
    for s in 1..=spec.sessions {
        let mut volume = LabelVolume::zeros(grid.clone());
        for blob in &blobs {
            let clean: BTreeSet<[usize; 3]> = blob.voxels.iter().copied().collect();
            let mut current = clean.clone();
            for p in spec.perturbations.iter().filter(|p| {
                p.session == s && p.side == blob.side && p.roi.eq_ignore_ascii_case(&blob.roi)
            }) {
                let before = current.len();
                let (next, sd) = perturb(&p.kind, &clean, current, dims, spec.spacing, &mut rng)?;
                current = next;
                applied.push(AppliedPerturbation {
                    session_id: spec.session_id(s),
                    roi: blob.roi.clone(),
                    side: blob.side,
                    label: blob.label,
                    kind: p.kind.clone(),
                    voxels_before: before,
                    voxels_after: current.len(),
                    surface_dice: sd,
                });
            }
            for v in &current {
                volume.set(v[0], v[1], v[2], blob.label);
            }
        }
        let mut meta = SessionMeta::new(spec.subject_id.clone(), spec.session_id(s));
        meta.acquisition_date =
            Some(spec.start_date + Duration::days(spec.interval_days * (s as i64 - 1)));
        if !spec.scanner_tags.is_empty() {
            meta.scanner_tag = Some(spec.scanner_tags[(s - 1) % spec.scanner_tags.len()].clone());
        }
        meta.voxel_size_mm = Some(spec.spacing);
        sessions.push(SynthSession { meta, volume });
    }
    let manifest = SynthManifest {
        seed,
        dims,
        spacing: spec.spacing,
        blobs: blobs
            .iter()
            .map(|b| BlobPlacement {
                roi: b.roi.clone(),
                side: b.side,
                label: b.label,
                center: b.center,
                voxels: b.voxels.len(),
            })
            .collect(),
        perturbations: applied,
        spec: spec.clone(),
    };
    Ok((sessions, manifest))
}

#[derive(Serialize)]
#[serde(rename_all = "PascalCase")]
struct SidecarOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    acquisition_date: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scanner_tag: Option<&'a str>,
}

/// Writes a BIDS-like tree under `out` and returns its manifest, which is
/// also saved as `manifest.json`.
pub fn generate(
    spec: &SynthSpec,
    registry: &RoiRegistry,
    seed: u64,
    out: impl AsRef<Path>,
) -> Result<SynthManifest> {
    let out = out.as_ref();
    let (sessions, manifest) = synthesize(spec, registry, seed)?;
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    let write = |p: &Path, text: String| fs::write(p, text).map_err(|e| Error::io(p, e));
    mkdir(out)?;
    write(
        &out.join("dataset_description.json"),
        "{\n  \"Name\": \"segrepro synthetic dataset\",\n  \"BIDSVersion\": \"1.8.0\",\n  \"DatasetType\": \"derivative\"\n}\n".into(),
    )?;
    for s in &sessions {
        let (sub, ses) = (&s.meta.subject_id, &s.meta.session_id);
        let anat = out
            .join(format!("sub-{sub}"))
            .join(format!("ses-{ses}"))
            .join("anat");
        mkdir(&anat)?;
        let stem = format!("sub-{sub}_ses-{ses}_dseg");
        write_label_volume(&s.volume, anat.join(format!("{stem}.nii.gz")))?;
        let sidecar = SidecarOut {
            acquisition_date: s.meta.acquisition_date.map(|d| d.to_string()),
            scanner_tag: s.meta.scanner_tag.as_deref(),
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("serialisable") + "\n";
        write(&anat.join(format!("{stem}.json")), text)?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("serialisable") + "\n";
    write(&out.join("manifest.json"), text)?;
    Ok(manifest)
}
