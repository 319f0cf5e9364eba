//! In-memory label volumes and their physical geometry.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};

/// Largest allowed discrepancy between an affine column norm and the
/// matching spacing component, in mm.
pub const GEOMETRY_TOLERANCE_MM: f64 = 1e-4;

/// Voxel grid geometry: extent, spacing and voxel-to-world (RAS mm) affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
}

/// The grid a volume is resampled onto.
pub type ReferenceGrid = Grid;

impl Grid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], affine: Matrix4<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Geometry(format!(
                "dims must be positive, got {dims:?}"
            )));
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(Error::Geometry(format!("dims {dims:?} overflow")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Geometry(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry("affine has non-finite entries".into()));
        }
        let last = affine.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::Geometry(format!(
                "affine last row must be (0,0,0,1), got ({}, {}, {}, {})",
                last[0], last[1], last[2], last[3]
            )));
        }
        for (axis, &s) in spacing.iter().enumerate() {
            let norm = affine.fixed_view::<3, 1>(0, axis).norm();
            if (norm - s).abs() > GEOMETRY_TOLERANCE_MM {
                return Err(Error::Geometry(format!(
                    "affine column {axis} has norm {norm} but spacing is {s}"
                )));
            }
        }
        Ok(Grid {
            dims,
            spacing,
            affine,
        })
    }

    /// Axis-aligned grid with its first voxel at the world origin.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        let affine = Matrix4::new_nonuniform_scaling(&nalgebra::Vector3::from(spacing));
        Grid::new(dims, spacing, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// World coordinate (mm) of a voxel center.
    pub fn voxel_to_world(&self, index: [f64; 3]) -> [f64; 3] {
        let v = self.affine * Vector4::new(index[0], index[1], index[2], 1.0);
        [v[0], v[1], v[2]]
    }

    /// Same dims and spacing; the affine is ignored.
    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.spacing == other.spacing
    }

    /// Same dims and spacing, with affines equal within the geometry tolerance.
    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.same_lattice(other)
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= GEOMETRY_TOLERANCE_MM)
    }
}

/// Linear index of voxel (x, y, z) in x-fastest order.
#[inline]
pub fn linear_index(dims: [usize; 3], x: usize, y: usize, z: usize) -> usize {
    x + dims[0] * (y + dims[1] * z)
}

/// A 3D grid of non-negative anatomical labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    grid: Grid,
    labels: Vec<u32>,
}

impl LabelVolume {
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::Geometry(format!(
                "dims {:?} need {} labels, got {}",
                grid.dims,
                grid.len(),
                labels.len()
            )));
        }
        Ok(LabelVolume { grid, labels })
    }

    /// An all-background volume on `grid`.
    pub fn zeros(grid: Grid) -> Self {
        let labels = vec![0; grid.len()];
        LabelVolume { grid, labels }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.grid.affine
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<u32> {
        self.labels
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u32 {
        self.labels[linear_index(self.grid.dims, x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, label: u32) {
        let i = linear_index(self.grid.dims, x, y, z);
        self.labels[i] = label;
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Sorted distinct labels, background included.
    pub fn distinct_labels(&self) -> Vec<u32> {
        let mut seen: Vec<u32> = self.labels.clone();
        seen.sort_unstable();
        seen.dedup();
        seen
    }
}
