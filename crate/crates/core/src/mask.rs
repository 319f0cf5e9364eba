use crate::error::{Error, Result};
use crate::volume::linear_index;

/// Voxel occupancy of one region on a label volume's lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    dims: [usize; 3],
    spacing: [f64; 3],
    occupancy: Vec<bool>,
}

impl BinaryMask {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], occupancy: Vec<bool>) -> Result<Self> {
        if dims.contains(&0) || spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Geometry(format!(
                "invalid mask geometry dims {dims:?} spacing {spacing:?}"
            )));
        }
        if occupancy.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Geometry(format!(
                "dims {dims:?} need {} voxels, got {}",
                dims[0] * dims[1] * dims[2],
                occupancy.len()
            )));
        }
        Ok(BinaryMask {
            dims,
            spacing,
            occupancy,
        })
    }

    pub fn empty(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        BinaryMask::new(dims, spacing, vec![false; dims[0] * dims[1] * dims[2]])
    }

    /// Builds a mask from a predicate on voxel coordinates.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: [f64; 3],
        mut f: impl FnMut(usize, usize, usize) -> bool,
    ) -> Result<Self> {
        let mut occupancy = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    occupancy.push(f(x, y, z));
                }
            }
        }
        BinaryMask::new(dims, spacing, occupancy)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.occupancy[linear_index(self.dims, x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = linear_index(self.dims, x, y, z);
        self.occupancy[i] = value;
    }

    pub fn count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupancy.iter().any(|&v| v)
    }

    /// Same spacing, scaled by `factor` on every axis.
    pub fn with_scaled_spacing(&self, factor: f64) -> Result<Self> {
        BinaryMask::new(
            self.dims,
            self.spacing.map(|s| s * factor),
            self.occupancy.clone(),
        )
    }

    pub(crate) fn check_same_grid(&self, other: &BinaryMask) -> Result<()> {
        if self.dims != other.dims || self.spacing != other.spacing {
            return Err(Error::GridMismatch(format!(
                "dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )));
        }
        Ok(())
    }

    /// Inclusive voxel bounding box of the occupied voxels.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        let [nx, ny, _] = self.dims;
        let mut bbox: Option<BoundingBox> = None;
        for (i, _) in self.occupancy.iter().enumerate().filter(|(_, &v)| v) {
            let p = [i % nx, (i / nx) % ny, i / (nx * ny)];
            match bbox.as_mut() {
                Some(b) => b.include(p),
                None => bbox = Some(BoundingBox { min: p, max: p }),
            }
        }
        bbox
    }
}

/// Inclusive voxel-index box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl BoundingBox {
    pub fn include(&mut self, p: [usize; 3]) {
        for (axis, &v) in p.iter().enumerate() {
            self.min[axis] = self.min[axis].min(v);
            self.max[axis] = self.max[axis].max(v);
        }
    }

    pub fn union(&self, other: &BoundingBox) -> BoundingBox {
        let mut out = *self;
        out.include(other.min);
        out.include(other.max);
        out
    }

    pub fn extent(&self) -> [usize; 3] {
        [0, 1, 2].map(|a| self.max[a] - self.min[a] + 1)
    }
}
