//! Overlap and boundary agreement between two masks on the same grid.
//!
//! All distances are in mm and honour anisotropic spacing. Boundary distances
//! are point-to-point between boundary voxel centres.

pub mod edt;
pub mod surface;

use serde::{Deserialize, Serialize};

use crate::error::{Emptiness, Error, Result};
use crate::mask::{BinaryMask, BoundingBox};
use crate::percentile::percentile;
use crate::roi::voxels_to_cm3;

pub use edt::{distance_field, DistanceField};
pub use surface::{extract_surface, SurfacePointSet};

/// Surface Dice tolerance used when none is given.
pub const DEFAULT_TOLERANCE_MM: f64 = 1.0;

/// Percentile used for the robust Hausdorff distance.
pub const HAUSDORFF_PERCENTILE: f64 = 95.0;

fn emptiness(a_empty: bool, b_empty: bool) -> Option<Emptiness> {
    match (a_empty, b_empty) {
        (false, false) => None,
        (true, false) => Some(Emptiness::FirstEmpty),
        (false, true) => Some(Emptiness::SecondEmpty),
        (true, true) => Some(Emptiness::BothEmpty),
    }
}

/// 2|A∩B| / (|A| + |B|) from exact voxel counts.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_grid(b)?;
    let (mut na, mut nb, mut both) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.occupancy().iter().zip(b.occupancy()) {
        na += x as u64;
        nb += y as u64;
        both += (x && y) as u64;
    }
    if na + nb == 0 {
        return Err(Error::Undefined(Emptiness::BothEmpty));
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// Boundary distances in both directions, sharing one crop box.
struct BoundaryDistances {
    /// d(x, ∂B) for x in ∂A
    a_to_b: Vec<f64>,
    /// d(y, ∂A) for y in ∂B
    b_to_a: Vec<f64>,
}

impl BoundaryDistances {
    fn compute(a: &BinaryMask, b: &BinaryMask) -> Result<Self> {
        a.check_same_grid(b)?;
        match (a.bounding_box(), b.bounding_box()) {
            (Some(x), Some(y)) => Ok(Self::within(a, b, &x, &y)),
            (x, y) => Err(Error::Undefined(
                emptiness(x.is_none(), y.is_none()).expect("at least one empty"),
            )),
        }
    }

    /// `box_a` and `box_b` must be the masks' own bounding boxes.
    fn within(a: &BinaryMask, b: &BinaryMask, box_a: &BoundingBox, box_b: &BoundingBox) -> Self {
        let surf_a = surface::surface_in_box(a, box_a);
        let surf_b = surface::surface_in_box(b, box_b);
        // Every site and query lies in the union box, so the cropped
        // transform is exact for them.
        let crop = box_a.union(box_b);
        let spacing = a.spacing();
        BoundaryDistances {
            a_to_b: directed(&surf_a, &surf_b, &crop, spacing),
            b_to_a: directed(&surf_b, &surf_a, &crop, spacing),
        }
    }

    fn surface_dice(&self, tolerance_mm: f64) -> f64 {
        let within = |d: &[f64]| d.iter().filter(|&&v| v <= tolerance_mm).count();
        let total = self.a_to_b.len() + self.b_to_a.len();
        (within(&self.a_to_b) + within(&self.b_to_a)) as f64 / total as f64
    }

    fn hd95(&self) -> f64 {
        let pa = percentile(&self.a_to_b, HAUSDORFF_PERCENTILE).expect("non-empty surface");
        let pb = percentile(&self.b_to_a, HAUSDORFF_PERCENTILE).expect("non-empty surface");
        pa.max(pb)
    }
}

fn directed(
    from: &SurfacePointSet,
    to: &SurfacePointSet,
    crop: &BoundingBox,
    spacing: [f64; 3],
) -> Vec<f64> {
    let field = edt::squared_distance_in_box(to.voxels(), crop, spacing);
    let [ex, ey, _] = crop.extent();
    from.voxels()
        .iter()
        .map(|v| {
            let (x, y, z) = (v[0] - crop.min[0], v[1] - crop.min[1], v[2] - crop.min[2]);
            field[x + ex * (y + ey * z)].sqrt()
        })
        .collect()
}

fn check_tolerance(tolerance_mm: f64) -> Result<()> {
    if !(tolerance_mm.is_finite() && tolerance_mm > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be a positive number of mm, got {tolerance_mm}"
        )));
    }
    Ok(())
}

/// Fraction of both boundaries lying within `tolerance_mm` of the other,
/// over the shared denominator |∂A| + |∂B|.
pub fn surface_dice(a: &BinaryMask, b: &BinaryMask, tolerance_mm: f64) -> Result<f64> {
    check_tolerance(tolerance_mm)?;
    Ok(BoundaryDistances::compute(a, b)?.surface_dice(tolerance_mm))
}

/// Larger of the two directed 95th-percentile boundary distances, in mm.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(BoundaryDistances::compute(a, b)?.hd95())
}

/// All agreement measures for one mask pair.
///
/// Similarity values are `None` when either mask is empty; `undefined`
/// then names which one. Volumes are always reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub dice: Option<f64>,
    pub surface_dice: Option<f64>,
    pub hd95_mm: Option<f64>,
    pub volume_a_cm3: f64,
    pub volume_b_cm3: f64,
    pub tolerance_mm: f64,
    pub undefined: Option<Emptiness>,
}

impl PairMetrics {
    pub fn is_defined(&self) -> bool {
        self.undefined.is_none()
    }

    /// volume_b - volume_a
    pub fn volume_diff_cm3(&self) -> f64 {
        self.volume_b_cm3 - self.volume_a_cm3
    }
}

pub fn pair_metrics(a: &BinaryMask, b: &BinaryMask, tolerance_mm: f64) -> Result<PairMetrics> {
    a.check_same_grid(b)?;
    check_tolerance(tolerance_mm)?;
    // One full-grid pass per mask; everything else stays inside the boxes.
    let (box_a, box_b) = (a.bounding_box(), b.bounding_box());
    let count_a = box_a.map_or(0, |bx| count_in_box(a, &bx, None));
    let count_b = box_b.map_or(0, |bx| count_in_box(b, &bx, None));
    let volume_a_cm3 = voxels_to_cm3(count_a, a.spacing());
    let volume_b_cm3 = voxels_to_cm3(count_b, b.spacing());
    let (box_a, box_b) = match (box_a, box_b) {
        (Some(x), Some(y)) => (x, y),
        (x, y) => {
            return Ok(PairMetrics {
                dice: None,
                surface_dice: None,
                hd95_mm: None,
                volume_a_cm3,
                volume_b_cm3,
                tolerance_mm,
                undefined: emptiness(x.is_none(), y.is_none()),
            })
        }
    };
    let both = count_in_box(a, &box_a.union(&box_b), Some(b));
    let distances = BoundaryDistances::within(a, b, &box_a, &box_b);
    Ok(PairMetrics {
        dice: Some(2.0 * both as f64 / (count_a + count_b) as f64),
        surface_dice: Some(distances.surface_dice(tolerance_mm)),
        hd95_mm: Some(distances.hd95()),
        volume_a_cm3,
        volume_b_cm3,
        tolerance_mm,
        undefined: None,
    })
}

/// Occupied voxels of `a` inside `bbox`, or of `a ∩ b` when `b` is given.
fn count_in_box(a: &BinaryMask, bbox: &BoundingBox, b: Option<&BinaryMask>) -> usize {
    let [nx, ny, _] = a.dims();
    let (oa, ob) = (a.occupancy(), b.map(|m| m.occupancy()));
    let mut n = 0;
    for z in bbox.min[2]..=bbox.max[2] {
        for y in bbox.min[1]..=bbox.max[1] {
            let row = nx * (y + ny * z);
            let span = row + bbox.min[0]..=row + bbox.max[0];
            n += match ob {
                Some(ob) => oa[span.clone()]
                    .iter()
                    .zip(&ob[span])
                    .filter(|(&x, &y)| x && y)
                    .count(),
                None => oa[span].iter().filter(|&&x| x).count(),
            };
        }
    }
    n
}
