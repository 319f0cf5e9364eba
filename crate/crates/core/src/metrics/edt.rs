//! Exact Euclidean distance transform on anisotropic grids.
//!
//! Separable lower-envelope-of-parabolas transform: one 1D pass per axis over
//! squared distances, each pass O(n) per line. The result is the exact
//! squared distance (in mm²) from every voxel centre to the nearest site.

use crate::error::{Error, Result};
use crate::mask::BoundingBox;
use crate::metrics::surface::SurfacePointSet;

/// Per-voxel distance (mm) to the nearest surface point.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    dims: [usize; 3],
    spacing: [f64; 3],
    values: Vec<f64>,
}

impl DistanceField {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }
}

/// Distance from every voxel of a `dims` grid to the nearest point of `surface`.
pub fn distance_field(surface: &SurfacePointSet, dims: [usize; 3]) -> Result<DistanceField> {
    if surface.is_empty() {
        return Err(Error::EmptyMask);
    }
    if dims.contains(&0) {
        return Err(Error::Geometry(format!("dims {dims:?} must be positive")));
    }
    if let Some(v) = surface
        .voxels()
        .iter()
        .find(|v| (0..3).any(|a| v[a] >= dims[a]))
    {
        return Err(Error::GridMismatch(format!(
            "surface voxel {v:?} outside grid {dims:?}"
        )));
    }
    let full = BoundingBox {
        min: [0; 3],
        max: dims.map(|d| d - 1),
    };
    let mut values = squared_distance_in_box(surface.voxels(), &full, surface.spacing());
    values.iter_mut().for_each(|v| *v = v.sqrt());
    Ok(DistanceField {
        dims,
        spacing: surface.spacing(),
        values,
    })
}

/// Squared distances over the sub-grid `bbox` (x-fastest, box-local indexing)
/// to the nearest of `sites`, which must all lie inside the box.
pub(crate) fn squared_distance_in_box(
    sites: &[[usize; 3]],
    bbox: &BoundingBox,
    spacing: [f64; 3],
) -> Vec<f64> {
    let ext = bbox.extent();
    let [ex, ey, ez] = ext;
    let mut grid = vec![f64::INFINITY; ex * ey * ez];
    for s in sites {
        let (x, y, z) = (s[0] - bbox.min[0], s[1] - bbox.min[1], s[2] - bbox.min[2]);
        grid[x + ex * (y + ey * z)] = 0.0;
    }

    let longest = ext.iter().copied().max().unwrap_or(0);
    let mut scratch = Envelope::with_capacity(longest);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];

    let strides = [1, ex, ex * ey];
    for axis in 0..3 {
        let n = ext[axis];
        if n == 1 {
            continue;
        }
        let stride = strides[axis];
        let (o1, o2) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..ext[o2] {
            for i in 0..ext[o1] {
                let base = i * strides[o1] + j * strides[o2];
                for (k, slot) in line[..n].iter_mut().enumerate() {
                    *slot = grid[base + k * stride];
                }
                scratch.transform(&line[..n], spacing[axis], &mut out[..n]);
                for (k, &v) in out[..n].iter().enumerate() {
                    grid[base + k * stride] = v;
                }
            }
        }
    }
    grid
}

struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// out[q] = min_p ((q - p) * step)^2 + f[p]
    fn transform(&mut self, f: &[f64], step: f64, out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        let pos = |i: usize| i as f64 * step;
        // Horizontal position where parabolas rooted at p and q (p < q) meet.
        let meet = |p: usize, q: usize| {
            let (xp, xq) = (pos(p), pos(q));
            ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp))
        };
        for (q, fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                match self.sites.last() {
                    None => {
                        self.sites.push(q);
                        self.bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&p) => {
                        let s = meet(p, q);
                        if s <= *self.bounds.last().unwrap() {
                            self.sites.pop();
                            self.bounds.pop();
                        } else {
                            self.sites.push(q);
                            self.bounds.push(s);
                            break;
                        }
                    }
                }
            }
        }
        if self.sites.is_empty() {
            out.iter_mut().for_each(|v| *v = f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, slot) in out.iter_mut().enumerate() {
            let x = pos(q);
            while k + 1 < self.sites.len() && self.bounds[k + 1] < x {
                k += 1;
            }
            let p = self.sites[k];
            let d = (q as f64 - p as f64) * step;
            *slot = d * d + f[p];
        }
    }
}
