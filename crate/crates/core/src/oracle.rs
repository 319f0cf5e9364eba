//! Brute-force reference implementations of the metric kernels.
//!
//! These are deliberately naive (set operations and exhaustive pairwise
//! distances) and share no code with [`crate::metrics`]. They back the
//! `selftest` command and the test suites.

use std::collections::BTreeSet;

use crate::mask::BinaryMask;

type Voxel = [usize; 3];

fn occupied(mask: &BinaryMask) -> BTreeSet<Voxel> {
    let [nx, ny, nz] = mask.dims();
    let mut out = BTreeSet::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if mask.get(x, y, z) {
                    out.insert([x, y, z]);
                }
            }
        }
    }
    out
}

/// Dice by set intersection. `None` when both masks are empty.
pub fn dice(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
    let sa = occupied(a);
    let sb = occupied(b);
    let total = sa.len() + sb.len();
    if total == 0 {
        return None;
    }
    Some(2.0 * sa.intersection(&sb).count() as f64 / total as f64)
}

/// Voxels with at least one face neighbour outside the mask or the grid.
pub fn surface(mask: &BinaryMask) -> Vec<Voxel> {
    let dims = mask.dims();
    let inside = |p: [i64; 3]| {
        (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < dims[a])
            && mask.get(p[0] as usize, p[1] as usize, p[2] as usize)
    };
    let offsets: [[i64; 3]; 6] = [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ];
    occupied(mask)
        .into_iter()
        .filter(|v| {
            let p = v.map(|c| c as i64);
            offsets
                .iter()
                .any(|o| !inside([p[0] + o[0], p[1] + o[1], p[2] + o[2]]))
        })
        .collect()
}

/// Euclidean distance between voxel centres, in mm.
pub fn voxel_distance(a: Voxel, b: Voxel, spacing: [f64; 3]) -> f64 {
    let dx = (a[0] as f64 - b[0] as f64) * spacing[0];
    let dy = (a[1] as f64 - b[1] as f64) * spacing[1];
    let dz = (a[2] as f64 - b[2] as f64) * spacing[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Exhaustive nearest distance from `p` to any of `set`.
pub fn min_distance(p: Voxel, set: &[Voxel], spacing: [f64; 3]) -> f64 {
    set.iter()
        .map(|&q| voxel_distance(p, q, spacing))
        .fold(f64::INFINITY, f64::min)
}

/// Directed distances d(x, ∂B) for every x in ∂A.
pub fn directed_distances(from: &[Voxel], to: &[Voxel], spacing: [f64; 3]) -> Vec<f64> {
    from.iter().map(|&p| min_distance(p, to, spacing)).collect()
}

/// Distance from every voxel of the grid to the nearest site.
pub fn distance_field(sites: &[Voxel], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                out.push(min_distance([x, y, z], sites, spacing));
            }
        }
    }
    out
}

/// Surface Dice with the shared denominator. `None` if either mask is empty.
pub fn surface_dice(a: &BinaryMask, b: &BinaryMask, tolerance_mm: f64) -> Option<f64> {
    let sa = surface(a);
    let sb = surface(b);
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let spacing = a.spacing();
    let mut hits = 0usize;
    for &x in &sa {
        if min_distance(x, &sb, spacing) <= tolerance_mm {
            hits += 1;
        }
    }
    for &y in &sb {
        if min_distance(y, &sa, spacing) <= tolerance_mm {
            hits += 1;
        }
    }
    Some(hits as f64 / (sa.len() + sb.len()) as f64)
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|x, y| x.partial_cmp(y).expect("finite distances"));
    let h = (v.len() - 1) as f64 * p / 100.0;
    let below = h.floor();
    let i = below as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    v[i] * (1.0 - (h - below)) + v[i + 1] * (h - below)
}

/// Symmetric 95th-percentile boundary distance. `None` if either mask is empty.
pub fn hd95(a: &BinaryMask, b: &BinaryMask) -> Option<f64> {
    let sa = surface(a);
    let sb = surface(b);
    if sa.is_empty() || sb.is_empty() {
        return None;
    }
    let spacing = a.spacing();
    let ab = percentile(&directed_distances(&sa, &sb, spacing), 95.0);
    let ba = percentile(&directed_distances(&sb, &sa, spacing), 95.0);
    Some(ab.max(ba))
}

/// Label at index `x + offset` of `labels`, or 0 outside the grid, for every
/// voxel `x`. A whole-voxel translation remapped one voxel at a time.
pub fn shift_labels(labels: &[u32], dims: [usize; 3], offset: [i64; 3]) -> Vec<u32> {
    let mut out = vec![0; labels.len()];
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let src = [
                    x as i64 + offset[0],
                    y as i64 + offset[1],
                    z as i64 + offset[2],
                ];
                if (0..3).all(|a| src[a] >= 0 && (src[a] as usize) < dims[a]) {
                    let [sx, sy, sz] = src.map(|c| c as usize);
                    out[x + dims[0] * (y + dims[1] * z)] =
                        labels[sx + dims[0] * (sy + dims[1] * sz)];
                }
            }
        }
    }
    out
}
