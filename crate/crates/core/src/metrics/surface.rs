use crate::error::{Error, Result};
use crate::mask::{BinaryMask, BoundingBox};
use crate::volume::linear_index;

/// Boundary voxels of a mask.
///
/// A voxel is on the boundary when at least one of its six face neighbours
/// is outside the mask; the grid edge counts as outside. Points are voxel
/// centres in the grid's physical frame (index × spacing, mm), so distances
/// between them equal world distances for any rigid voxel-to-world affine.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    spacing: [f64; 3],
    voxels: Vec<[usize; 3]>,
    points: Vec<[f64; 3]>,
}

impl SurfacePointSet {
    pub fn voxels(&self) -> &[[usize; 3]] {
        &self.voxels
    }

    pub fn points(&self) -> &[[f64; 3]] {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub(crate) fn from_voxels(spacing: [f64; 3], voxels: Vec<[usize; 3]>) -> Self {
        let points = voxels
            .iter()
            .map(|v| [0, 1, 2].map(|a| v[a] as f64 * spacing[a]))
            .collect();
        SurfacePointSet {
            spacing,
            voxels,
            points,
        }
    }
}

/// Boundary voxels of a non-empty mask, in x-fastest scan order.
pub fn extract_surface(mask: &BinaryMask) -> Result<SurfacePointSet> {
    let bbox = mask.bounding_box().ok_or(Error::EmptyMask)?;
    Ok(surface_in_box(mask, &bbox))
}

pub(crate) fn surface_in_box(mask: &BinaryMask, bbox: &BoundingBox) -> SurfacePointSet {
    let dims = mask.dims();
    let occ = mask.occupancy();
    let [nx, ny, nz] = dims;
    let mut voxels = Vec::new();
    for z in bbox.min[2]..=bbox.max[2] {
        for y in bbox.min[1]..=bbox.max[1] {
            for x in bbox.min[0]..=bbox.max[0] {
                let i = linear_index(dims, x, y, z);
                if !occ[i] {
                    continue;
                }
                let boundary = x == 0
                    || y == 0
                    || z == 0
                    || x + 1 == nx
                    || y + 1 == ny
                    || z + 1 == nz
                    || !occ[i - 1]
                    || !occ[i + 1]
                    || !occ[i - nx]
                    || !occ[i + nx]
                    || !occ[i - nx * ny]
                    || !occ[i + nx * ny];
                if boundary {
                    voxels.push([x, y, z]);
                }
            }
        }
    }
    SurfacePointSet::from_voxels(mask.spacing(), voxels)
}
