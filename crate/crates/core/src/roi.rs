//! Atlas regions of interest and per-hemisphere mask extraction.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::volume::LabelVolume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiClass {
    Cortical,
    Subcortical,
}

impl RoiClass {
    pub fn as_str(self) -> &'static str {
        match self {
            RoiClass::Cortical => "cortical",
            RoiClass::Subcortical => "subcortical",
        }
    }
}

/// Hemisphere selection for mask extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Both,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" | "lh" => Some(Side::Left),
            "right" | "r" | "rh" => Some(Side::Right),
            "both" | "b" | "merged" => Some(Side::Both),
            _ => None,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named region given by its left- and right-hemisphere atlas label IDs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub name: String,
    pub left_ids: BTreeSet<u32>,
    pub right_ids: BTreeSet<u32>,
    pub class: RoiClass,
}

impl RoiSpec {
    pub fn bilateral(name: &str, left: u32, right: u32, class: RoiClass) -> Self {
        RoiSpec {
            name: name.to_string(),
            left_ids: BTreeSet::from([left]),
            right_ids: BTreeSet::from([right]),
            class,
        }
    }

    pub fn ids(&self, side: Side) -> BTreeSet<u32> {
        match side {
            Side::Left => self.left_ids.clone(),
            Side::Right => self.right_ids.clone(),
            Side::Both => self.left_ids.union(&self.right_ids).copied().collect(),
        }
    }
}

/// Ordered list of regions with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<RoiSpec>", into = "Vec<RoiSpec>")]
pub struct RoiRegistry {
    entries: Vec<RoiSpec>,
}

impl TryFrom<Vec<RoiSpec>> for RoiRegistry {
    type Error = Error;

    fn try_from(entries: Vec<RoiSpec>) -> Result<Self> {
        RoiRegistry::new(entries)
    }
}

impl From<RoiRegistry> for Vec<RoiSpec> {
    fn from(r: RoiRegistry) -> Self {
        r.entries
    }
}

impl RoiRegistry {
    pub fn new(entries: Vec<RoiSpec>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for spec in &entries {
            if spec.name.trim().is_empty() {
                return Err(Error::Registry("empty ROI name".into()));
            }
            if !names.insert(spec.name.to_lowercase()) {
                return Err(Error::Registry(format!(
                    "duplicate ROI name {:?}",
                    spec.name
                )));
            }
            if spec.left_ids.is_empty() && spec.right_ids.is_empty() {
                return Err(Error::Registry(format!("{:?} has no label IDs", spec.name)));
            }
            if spec.left_ids.contains(&0) || spec.right_ids.contains(&0) {
                return Err(Error::Registry(format!(
                    "{:?}: label IDs must be positive",
                    spec.name
                )));
            }
            if let Some(id) = spec.left_ids.intersection(&spec.right_ids).next() {
                return Err(Error::Registry(format!(
                    "{:?}: label {id} listed for both hemispheres",
                    spec.name
                )));
            }
        }
        Ok(RoiRegistry { entries })
    }

    /// Reads a JSON list of `{name, left_ids, right_ids, class}` objects.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn entries(&self) -> &[RoiSpec] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Case-insensitive lookup by name.
    pub fn get(&self, name: &str) -> Result<&RoiSpec> {
        self.entries
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::RoiNotFound(name.to_string()))
    }

    /// Every label ID referenced by any entry.
    pub fn all_ids(&self) -> BTreeSet<u32> {
        self.entries
            .iter()
            .flat_map(|s| s.left_ids.iter().chain(&s.right_ids).copied())
            .collect()
    }
}

/// The 9 cortical (DKT) and 8 subcortical (aseg) bilateral regions.
pub fn default_registry() -> RoiRegistry {
    use RoiClass::*;
    let table: [(&str, u32, u32, RoiClass); 17] = [
        ("Entorhinal Cortex", 1006, 2006, Cortical),
        ("Caudal Anterior Cingulate Cortex", 1002, 2002, Cortical),
        ("Inferior Parietal Cortex", 1008, 2008, Cortical),
        ("Fusiform Gyrus", 1007, 2007, Cortical),
        ("Medial Orbitofrontal Cortex", 1014, 2014, Cortical),
        ("Lateral Orbitofrontal Cortex", 1012, 2012, Cortical),
        ("Superior Temporal Cortex", 1030, 2030, Cortical),
        ("Insula", 1035, 2035, Cortical),
        ("Superior Frontal Cortex", 1028, 2028, Cortical),
        ("Hippocampus", 17, 53, Subcortical),
        ("Amygdala", 18, 54, Subcortical),
        ("Thalamus", 10, 49, Subcortical),
        ("Caudate", 11, 50, Subcortical),
        ("Putamen", 12, 51, Subcortical),
        ("Pallidum", 13, 52, Subcortical),
        ("Accumbens", 26, 58, Subcortical),
        ("VentralDC", 28, 60, Subcortical),
    ];
    let entries = table
        .iter()
        .map(|&(name, l, r, class)| RoiSpec::bilateral(name, l, r, class))
        .collect();
    RoiRegistry::new(entries).expect("built-in registry is valid")
}

/// Mask of voxels whose label belongs to `ids`.
pub fn mask_for_ids(volume: &LabelVolume, ids: &BTreeSet<u32>) -> BinaryMask {
    let max_id = ids.iter().next_back().copied().unwrap_or(0) as usize;
    let occupancy: Vec<bool> = if max_id <= 1 << 16 {
        let mut table = vec![false; max_id + 1];
        for &id in ids {
            table[id as usize] = true;
        }
        volume
            .labels()
            .iter()
            .map(|&l| table.get(l as usize).copied().unwrap_or(false))
            .collect()
    } else {
        volume.labels().iter().map(|l| ids.contains(l)).collect()
    };
    BinaryMask::new(volume.dims(), volume.spacing(), occupancy)
        .expect("label volume geometry is valid")
}

/// Mask of `spec` on `side`. Labels absent from the volume give an empty mask.
pub fn extract_mask(volume: &LabelVolume, spec: &RoiSpec, side: Side) -> BinaryMask {
    mask_for_ids(volume, &spec.ids(side))
}

/// Occupied volume in cm³.
pub fn mask_volume_cm3(mask: &BinaryMask) -> f64 {
    voxels_to_cm3(mask.count(), mask.spacing())
}

pub(crate) fn voxels_to_cm3(count: usize, [sx, sy, sz]: [f64; 3]) -> f64 {
    count as f64 * sx * sy * sz / 1000.0
}
