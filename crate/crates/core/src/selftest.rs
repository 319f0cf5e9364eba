//! Seeded comparison of the optimized kernels against the brute-force oracles.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;
use crate::metrics::{self, distance_field, extract_surface};
use crate::nifti::{decode_label_volume, encode_label_volume};
use crate::oracle;
use crate::resample::{resample_labels, AffineTransform};
use crate::volume::{Grid, LabelVolume};

const LABELS: [u32; 6] = [0, 10, 17, 53, 1006, 2035];

pub fn random_dims(rng: &mut impl Rng, range: &RangeInclusive<usize>) -> [usize; 3] {
    [0; 3].map(|_| rng.random_range(range.clone()))
}

pub fn random_spacing(rng: &mut impl Rng, range: &RangeInclusive<f64>) -> [f64; 3] {
    [0; 3].map(|_| rng.random_range(range.clone()))
}

/// A union of one to three random balls and boxes plus a few flipped voxels.
pub fn random_mask(rng: &mut impl Rng, dims: [usize; 3], spacing: [f64; 3]) -> BinaryMask {
    let shapes: Vec<(bool, [f64; 3], [f64; 3])> = (0..rng.random_range(1..=3))
        .map(|_| {
            let ball = rng.random_bool(0.5);
            let c = [0, 1, 2].map(|a| rng.random_range(0.0..dims[a] as f64));
            let r = [0; 3].map(|_| {
                rng.random_range(1.0..(dims[0].min(dims[1]).min(dims[2]) as f64 / 3.0).max(1.5))
            });
            (ball, c, r)
        })
        .collect();
    let mut m = BinaryMask::from_fn(dims, spacing, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        shapes.iter().any(|(ball, c, r)| {
            if *ball {
                (0..3).map(|a| ((p[a] - c[a]) / r[a]).powi(2)).sum::<f64>() <= 1.0
            } else {
                (0..3).all(|a| (p[a] - c[a]).abs() <= r[a])
            }
        })
    })
    .expect("valid random grid");
    for _ in 0..rng.random_range(0..6) {
        let [x, y, z] = [0, 1, 2].map(|a| rng.random_range(0..dims[a]));
        let v = m.get(x, y, z);
        m.set(x, y, z, !v);
    }
    m
}

/// Two masks on one grid: mostly a mask and a perturbed copy, sometimes two
/// independent masks, occasionally an empty one.
pub fn random_mask_pair(
    rng: &mut impl Rng,
    dims: [usize; 3],
    spacing: [f64; 3],
) -> (BinaryMask, BinaryMask) {
    let a = random_mask(rng, dims, spacing);
    let roll: f64 = rng.random();
    let b = if roll < 0.03 {
        BinaryMask::empty(dims, spacing).expect("valid grid")
    } else if roll < 0.25 {
        random_mask(rng, dims, spacing)
    } else {
        let shift = [0; 3].map(|_| rng.random_range(-1i64..=1));
        let mut b = BinaryMask::from_fn(dims, spacing, |x, y, z| {
            let s = [
                x as i64 - shift[0],
                y as i64 - shift[1],
                z as i64 - shift[2],
            ];
            (0..3).all(|k| s[k] >= 0 && (s[k] as usize) < dims[k])
                && a.get(s[0] as usize, s[1] as usize, s[2] as usize)
        })
        .expect("valid grid");
        for _ in 0..rng.random_range(0..10) {
            let [x, y, z] = [0, 1, 2].map(|k| rng.random_range(0..dims[k]));
            let v = b.get(x, y, z);
            b.set(x, y, z, !v);
        }
        b
    };
    if rng.random_bool(0.5) {
        (a, b)
    } else {
        (b, a)
    }
}

/// A label volume of random blobs drawn from a handful of atlas labels.
pub fn random_label_volume(rng: &mut impl Rng, grid: Grid) -> LabelVolume {
    let dims = grid.dims();
    let mut vol = LabelVolume::zeros(grid);
    for &label in &LABELS[1..] {
        let m = random_mask(rng, dims, [1.0; 3]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    if m.get(x, y, z) {
                        vol.set(x, y, z, label);
                    }
                }
            }
        }
    }
    vol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    pub max_abs_error: f64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl CheckResult {
    fn new(name: &str) -> Self {
        CheckResult {
            name: name.into(),
            cases: 0,
            failures: 0,
            max_abs_error: 0.0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, err: f64, detail: impl FnOnce() -> String) {
        self.cases += 1;
        if err.is_finite() {
            self.max_abs_error = self.max_abs_error.max(err);
        }
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(detail());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }
}

fn agree(kernel: Option<f64>, oracle: Option<f64>, tol: f64) -> (bool, f64) {
    match (kernel, oracle) {
        (Some(k), Some(o)) => ((k - o).abs() <= tol, (k - o).abs()),
        (None, None) => (true, 0.0),
        _ => (false, f64::INFINITY),
    }
}

/// Runs `cases` random instances of every check.
pub fn run_selftest(seed: u64, cases: usize) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dice = CheckResult::new("dice vs set counting");
    let mut sdice = CheckResult::new("surface_dice vs exhaustive distances");
    let mut hd = CheckResult::new("hd95 vs exhaustive distances");
    let mut edt = CheckResult::new("distance transform vs exhaustive field");
    let mut shift = CheckResult::new("one-voxel translation vs remap");
    let mut io = CheckResult::new("nifti encode/decode round trip");

    for case in 0..cases {
        let dims = random_dims(&mut rng, &(6..=10));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let (a, b) = random_mask_pair(&mut rng, dims, spacing);
        let tol = rng.random_range(0.5..2.0);
        let ctx = || format!("case {case}: dims {dims:?} spacing {spacing:?}");

        let (ok, err) = agree(metrics::dice(&a, &b).ok(), oracle::dice(&a, &b), 0.0);
        dice.record(ok, err, ctx);
        let (ok, err) = agree(
            metrics::surface_dice(&a, &b, tol).ok(),
            oracle::surface_dice(&a, &b, tol),
            1e-9,
        );
        sdice.record(ok, err, ctx);
        let (ok, err) = agree(metrics::hd95(&a, &b).ok(), oracle::hd95(&a, &b), 1e-6);
        hd.record(ok, err, ctx);

        if let Ok(surface) = extract_surface(&a) {
            let field = distance_field(&surface, dims).expect("non-empty surface");
            let expect = oracle::distance_field(&oracle::surface(&a), dims, spacing);
            let err = field
                .values()
                .iter()
                .zip(&expect)
                .map(|(k, o)| (k - o).abs())
                .fold(0.0, f64::max);
            edt.record(err <= 1e-9, err, ctx);
        }

        let grid = Grid::axis_aligned(dims, spacing).expect("valid grid");
        let vol = random_label_volume(&mut rng, grid.clone());
        let axis = rng.random_range(0..3);
        let step = if rng.random_bool(0.5) { 1 } else { -1 };
        let mut offset = [0i64; 3];
        offset[axis] = step;
        let mut mm = [0.0; 3];
        mm[axis] = step as f64 * spacing[axis];
        let moved = resample_labels(&vol, &AffineTransform::translation(mm), &grid)
            .expect("resampling succeeds");
        let expect = oracle::shift_labels(vol.labels(), dims, offset);
        shift.record(moved.labels() == expect.as_slice(), 0.0, ctx);

        // The header stores geometry as f32.
        let stored =
            Grid::axis_aligned(dims, spacing.map(|s| s as f32 as f64)).expect("valid grid");
        let vol = LabelVolume::new(stored, vol.into_labels()).expect("same length");
        let round = encode_label_volume(&vol)
            .ok()
            .and_then(|bytes| decode_label_volume(&bytes).ok());
        io.record(round.as_ref() == Some(&vol), 0.0, ctx);
    }
    SelftestReport {
        seed,
        checks: vec![dice, sdice, hd, edt, shift, io],
    }
}
