//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::{Matrix4, Rotation3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use segrepro_core::harness::{evaluate_volumes, PairingPolicy};
use segrepro_core::nifti::{decode_label_volume, encode_label_volume, read_header};
use segrepro_core::report::{run_batch, FilterEntry, RunConfig, FILTER_FILE, RECORDS_FILE};
use segrepro_core::selftest::{random_dims, random_label_volume, random_mask_pair, random_spacing};
use segrepro_core::stats::{
    fit_trend_years, mape, BandKind, FilterMetric, FilterRule, FilterScope,
};
use segrepro_core::synth::{generate, SynthSpec};
use segrepro_core::{
    default_registry, dice, extract_mask, extract_surface, hd95, oracle, read_label_volume,
    resample_labels, surface_dice, write_label_volume, AffineTransform, BinaryMask, Grid,
    LabelVolume, RoiClass, Side,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

fn cube(dims: [usize; 3], lo: [usize; 3], size: usize) -> BinaryMask {
    BinaryMask::from_fn(dims, [1.0; 3], |x, y, z| {
        let p = [x, y, z];
        (0..3).all(|a| p[a] >= lo[a] && p[a] < lo[a] + size)
    })
    .unwrap()
}

fn close(k: Option<f64>, o: Option<f64>, tol: f64) -> bool {
    match (k, o) {
        (Some(k), Some(o)) => (k - o).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut sd_err, mut hd_err) = (0.0f64, 0.0f64);
    let mut defined = 0;
    for case in 0..200 {
        let dims = random_dims(&mut rng, &(12..=16));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let (a, b) = random_mask_pair(&mut rng, dims, spacing);
        ensure!(
            dice(&a, &b).ok() == oracle::dice(&a, &b),
            "case {case}: dice differs"
        );
        let tol = rng.random_range(0.5..2.0);
        let (ks, os) = (
            surface_dice(&a, &b, tol).ok(),
            oracle::surface_dice(&a, &b, tol),
        );
        let (kh, oh) = (hd95(&a, &b).ok(), oracle::hd95(&a, &b));
        ensure!(
            close(ks, os, 1e-9),
            "case {case}: surface_dice {ks:?} vs {os:?}"
        );
        ensure!(close(kh, oh, 1e-6), "case {case}: hd95 {kh:?} vs {oh:?}");
        if let (Some(ks), Some(os), Some(kh), Some(oh)) = (ks, os, kh, oh) {
            sd_err = sd_err.max((ks - os).abs());
            hd_err = hd_err.max((kh - oh).abs());
            defined += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    Ok(format!(
        "200 pairs ({defined} defined), max |Δ| sdice {sd_err:e}, hd95 {hd_err:e} mm, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn analytic_cases() -> Check {
    let dims = [6, 6, 6];
    let a = cube(dims, [1, 1, 1], 2);
    let b = cube(dims, [2, 1, 1], 2);
    ensure!(
        dice(&a, &b).unwrap() == 0.5,
        "shifted cube dice {}",
        dice(&a, &b).unwrap()
    );
    ensure!(dice(&a, &a).unwrap() == 1.0, "identical dice");
    ensure!(surface_dice(&a, &a, 1.0).unwrap() == 1.0, "identical sdice");
    ensure!(hd95(&a, &a).unwrap() == 0.0, "identical hd95");
    let n = extract_surface(&cube(dims, [1, 1, 1], 3)).unwrap().count();
    ensure!(n == 26, "3x3x3 cube has {n} surface voxels");
    Ok("dice 0.5, identity 1/1/0, 26 surface voxels".into())
}

fn metric_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let taus: Vec<f64> = (1..=20).map(|i| 0.2 * i as f64).collect();
    let mut n = 0;
    while n < 500 {
        let dims = random_dims(&mut rng, &(6..=12));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let (a, b) = random_mask_pair(&mut rng, dims, spacing);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        n += 1;
        let d = dice(&a, &b).unwrap();
        let h = hd95(&a, &b).unwrap();
        ensure!(
            (d - dice(&b, &a).unwrap()).abs() <= 1e-9,
            "pair {n}: dice asymmetric"
        );
        ensure!(
            (h - hd95(&b, &a).unwrap()).abs() <= 1e-9,
            "pair {n}: hd95 asymmetric"
        );
        let mut last = 0.0;
        for &t in &taus {
            let s = surface_dice(&a, &b, t).unwrap();
            ensure!(
                (s - surface_dice(&b, &a, t).unwrap()).abs() <= 1e-9,
                "pair {n}: sdice asymmetric"
            );
            ensure!(s + 1e-9 >= last, "pair {n}: sdice decreases at τ = {t}");
            last = s;
        }
        let c = [0.5, 1.7, 2.0, 3.0][n % 4];
        let (sa, sb) = (
            a.with_scaled_spacing(c).unwrap(),
            b.with_scaled_spacing(c).unwrap(),
        );
        ensure!(
            (dice(&sa, &sb).unwrap() - d).abs() <= 1e-9,
            "pair {n}: dice changed under scaling"
        );
        let hs = hd95(&sa, &sb).unwrap();
        ensure!(
            (hs - c * h).abs() <= 1e-9 * (1.0 + c * h),
            "pair {n}: hd95 {hs} vs {}",
            c * h
        );
        for t in [0.6, 1.0, 1.9] {
            let (s0, s1) = (
                surface_dice(&a, &b, t).unwrap(),
                surface_dice(&sa, &sb, t * c).unwrap(),
            );
            ensure!(
                (s0 - s1).abs() <= 1e-9,
                "pair {n}: sdice {s0} vs {s1} at c = {c}"
            );
        }
    }
    Ok("500 pairs: symmetry, monotone over 20 τ, scaling by 0.5/1.7/2/3".into())
}

/// Surface Dice written out directly from its definition: border points of
/// each surface within τ of the other, over the total border size.
fn literal_surface_dice(a: &BinaryMask, b: &BinaryMask, tau: f64) -> f64 {
    let (sa, sb) = (oracle::surface(a), oracle::surface(b));
    let within = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        from.iter()
            .filter(|&&p| oracle::min_distance(p, to, a.spacing()) <= tau)
            .count()
    };
    (within(&sa, &sb) + within(&sb, &sa)) as f64 / (sa.len() + sb.len()) as f64
}

fn literal_forms() -> Check {
    let m = mape([(1.0, 1.0), (1.0, 1.1), (1.0, 0.9)]).map_err(|e| e.to_string())?;
    ensure!((m - 20.0 / 3.0).abs() <= 1e-9, "MAPE {m}");

    // Unequal surface sizes separate the shared denominator from the mean of
    // the two directed fractions.
    let dims = [14, 14, 14];
    let big = cube(dims, [2, 2, 2], 8);
    let small = cube(dims, [3, 3, 3], 3);
    let s = surface_dice(&big, &small, 1.0).unwrap();
    let lit = literal_surface_dice(&big, &small, 1.0);
    ensure!((s - lit).abs() <= 1e-12, "sdice {s} vs literal {lit}");
    let (sa, sb) = (oracle::surface(&big), oracle::surface(&small));
    let frac = |from: &[[usize; 3]], to: &[[usize; 3]]| {
        from.iter()
            .filter(|&&p| oracle::min_distance(p, to, [1.0; 3]) <= 1.0)
            .count() as f64
            / from.len() as f64
    };
    let mean_directed = 0.5 * (frac(&sa, &sb) + frac(&sb, &sa));
    ensure!(
        (s - mean_directed).abs() > 1e-3,
        "shared and mean forms coincide"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..100 {
        let dims = random_dims(&mut rng, &(8..=12));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let (a, b) = random_mask_pair(&mut rng, dims, spacing);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let t = rng.random_range(0.5..2.5);
        let (k, l) = (
            surface_dice(&a, &b, t).unwrap(),
            literal_surface_dice(&a, &b, t),
        );
        ensure!((k - l).abs() <= 1e-9, "case {case}: {k} vs {l}");
    }
    Ok(format!(
        "MAPE {m:.12} %, sdice {s:.6} (mean-of-directed would give {mean_directed:.6})"
    ))
}

/// Oblique grid whose geometry survives the f32 header fields.
fn oblique(rng: &mut ChaCha8Rng, dims: [usize; 3], spacing: [f64; 3]) -> Grid {
    let f = |v: f64| v as f32 as f64;
    let spacing = spacing.map(f);
    let r = Rotation3::from_euler_angles(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let mut affine = Matrix4::identity();
    for row in 0..3 {
        for col in 0..3 {
            affine[(row, col)] = f(r[(row, col)] * spacing[col]);
        }
        affine[(row, 3)] = f(rng.random_range(-80.0..80.0));
    }
    Grid::new(dims, spacing, affine).unwrap()
}

fn resampling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..50 {
        let dims = random_dims(&mut rng, &(4..=14));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let grid = oblique(&mut rng, dims, spacing);
        let vol = random_label_volume(&mut rng, grid);
        let out = resample_labels(&vol, &AffineTransform::identity(), vol.grid()).unwrap();
        ensure!(out == vol, "volume {i}: identity changed voxels");
    }
    for i in 0..50 {
        let dims = random_dims(&mut rng, &(4..=14));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let vol = random_label_volume(&mut rng, Grid::axis_aligned(dims, spacing).unwrap());
        for axis in 0..3 {
            for step in [-1i64, 1] {
                let mut offset = [0i64; 3];
                offset[axis] = step;
                let mut mm = [0.0; 3];
                mm[axis] = step as f64 * spacing[axis];
                let out =
                    resample_labels(&vol, &AffineTransform::translation(mm), vol.grid()).unwrap();
                ensure!(
                    out.labels() == oracle::shift_labels(vol.labels(), dims, offset).as_slice(),
                    "volume {i}: translation {offset:?} differs from remap"
                );
            }
        }
    }
    for i in 0..50 {
        let dims = random_dims(&mut rng, &(6..=14));
        let spacing = random_spacing(&mut rng, &(0.7..=1.2));
        let grid = oblique(&mut rng, dims, spacing);
        let vol = random_label_volume(&mut rng, grid);
        let ref_dims = random_dims(&mut rng, &(6..=14));
        let ref_spacing = random_spacing(&mut rng, &(0.5..=2.0));
        let reference = oblique(&mut rng, ref_dims, ref_spacing);
        let r = Rotation3::from_euler_angles(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(r.matrix() * rng.random_range(0.7..1.4)));
        for row in 0..3 {
            m[(row, 3)] = rng.random_range(-5.0..5.0);
        }
        let out = resample_labels(
            &vol,
            &AffineTransform::new(m, "random").unwrap(),
            &reference,
        )
        .unwrap();
        let allowed: BTreeSet<u32> = vol.labels().iter().copied().chain([0]).collect();
        ensure!(
            out.labels().iter().all(|l| allowed.contains(l)),
            "volume {i}: invented a label"
        );
    }
    Ok("identity bitwise on 50 oblique volumes, ±1 voxel on 50 volumes, 50 random affines".into())
}

const CORRUPTED: [(&str, Side); 5] = [
    ("Hippocampus", Side::Left),
    ("Amygdala", Side::Right),
    ("Thalamus", Side::Left),
    ("Caudate", Side::Right),
    ("Putamen", Side::Left),
];

fn segrepro(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_segrepro"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "segrepro {args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn synthetic_audit() -> Check {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let perturbations: Vec<String> = CORRUPTED
        .iter()
        .enumerate()
        .map(|(i, (roi, side))| {
            format!(
                r#"{{"session": {}, "roi": "{roi}", "side": "{}", "corrupt": {{"below": 0.92, "tolerance_mm": 1.0}}}}"#,
                i + 2,
                side.as_str()
            )
        })
        .collect();
    let spec = format!(
        r#"{{"sessions": 6, "perturbations": [{}]}}"#,
        perturbations.join(",")
    );
    let spec_path = tmp.path().join("spec.json");
    fs::write(&spec_path, spec).unwrap();
    let data = tmp.path().join("data");
    segrepro(&[
        "synth",
        spec_path.to_str().unwrap(),
        data.to_str().unwrap(),
        "--seed",
        "6",
    ])?;

    let thresholds = [0.85, 0.90, 0.92, 0.95];
    let mut config = RunConfig::new(&data, tmp.path().join("out"));
    config.policy = PairingPolicy::FirstReference;
    config.filters = thresholds
        .iter()
        .map(|&t| FilterRule::new(FilterMetric::SurfaceDice, t, FilterScope::Subcortical).unwrap())
        .collect();
    let config_path = tmp.path().join("run.json");
    fs::write(&config_path, config.to_json()).unwrap();
    segrepro(&["batch", config_path.to_str().unwrap()])?;

    let report: Vec<FilterEntry> =
        serde_json::from_slice(&fs::read(config.output_dir.join(FILTER_FILE)).unwrap())
            .map_err(|e| e.to_string())?;
    let at = |t: f64| {
        report
            .iter()
            .find(|f| f.report.rule.threshold == t)
            .unwrap()
    };
    let removed: BTreeSet<(String, String, Side)> = at(0.92)
        .removed
        .iter()
        .map(|k| (k.session_b.clone(), k.roi.clone(), k.side))
        .collect();
    let expected: BTreeSet<(String, String, Side)> = CORRUPTED
        .iter()
        .enumerate()
        .map(|(i, (roi, side))| (format!("{:02}", i + 2), roi.to_string(), *side))
        .collect();
    ensure!(
        removed == expected,
        "removed {removed:?}, expected {expected:?}"
    );

    // Brute force decides every subcortical record independently.
    let registry = default_registry();
    let reference = read_label_volume(data.join("sub-01/ses-01/anat/sub-01_ses-01_dseg.nii.gz"))
        .map_err(|e| e.to_string())?;
    let mut below = BTreeSet::new();
    for s in 2..=6 {
        let id = format!("{s:02}");
        let vol = read_label_volume(
            data.join(format!("sub-01/ses-{id}/anat/sub-01_ses-{id}_dseg.nii.gz")),
        )
        .map_err(|e| e.to_string())?;
        for spec in registry
            .entries()
            .iter()
            .filter(|r| r.class == RoiClass::Subcortical)
        {
            for side in [Side::Left, Side::Right] {
                let sd = oracle::surface_dice(
                    &extract_mask(&reference, spec, side),
                    &extract_mask(&vol, spec, side),
                    1.0,
                );
                if sd.is_none_or(|v| v < 0.92) {
                    below.insert((id.clone(), spec.name.clone(), side));
                }
            }
        }
    }
    ensure!(below == expected, "oracle flags {below:?}");

    let mut last: BTreeSet<_> = BTreeSet::new();
    for t in thresholds {
        let now: BTreeSet<_> = at(t).removed.iter().cloned().collect();
        ensure!(last.is_subset(&now), "removed set shrinks at {t}");
        last = now;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    let counts: Vec<usize> = thresholds.iter().map(|&t| at(t).removed.len()).collect();
    Ok(format!(
        "removed exactly the 5 corrupted records; removed counts {counts:?} at {thresholds:?}; {:.1} s",
        elapsed.as_secs_f64()
    ))
}

/// Central R² band of the noisy fixture from a 200 000-replicate Monte-Carlo
/// run of the same design.
const NOISY_R2_BAND: (f64, f64) = (8.1e-5, 0.3596);

fn trend_recovery() -> Check {
    let years: Vec<f64> = (0..73).map(|i| 17.0 * i as f64 / 72.0).collect();
    let line: Vec<f64> = years.iter().map(|t| 4.5 + 0.01 * t).collect();
    let exact = fit_trend_years(&years, &line, BandKind::Mean).map_err(|e| e.to_string())?;
    ensure!(
        (exact.slope - 0.01).abs() <= 1e-12,
        "noiseless slope {}",
        exact.slope
    );
    ensure!(
        (exact.r_squared - 1.0).abs() <= 1e-12,
        "noiseless R² {}",
        exact.r_squared
    );

    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let noisy: Vec<f64> = line.iter().map(|v| v + noise.sample(&mut rng)).collect();
    let fit = fit_trend_years(&years, &noisy, BandKind::Mean).map_err(|e| e.to_string())?;
    let z = (fit.slope - 0.01).abs() / fit.slope_se;
    ensure!(z <= 3.0, "slope {} is {z:.2} SE from 0.01", fit.slope);
    ensure!(
        (NOISY_R2_BAND.0..=NOISY_R2_BAND.1).contains(&fit.r_squared),
        "R² {} outside {NOISY_R2_BAND:?}",
        fit.r_squared
    );
    Ok(format!(
        "noiseless exact; noisy slope {:.5} ± {:.5} ({z:.2} SE), R² {:.4}",
        fit.slope, fit.slope_se, fit.r_squared
    ))
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut spec = SynthSpec::new(5);
    spec.scanner_tags = vec!["A".into(), "A".into(), "B".into()];
    spec.perturbations = serde_json::from_str(
        r#"[{"session": 2, "roi": "Putamen", "side": "left", "noise_flips": {"count": 20}},
            {"session": 3, "roi": "Insula", "side": "right", "erode": {"shells": 1}},
            {"session": 4, "roi": "Thalamus", "side": "left", "shift": {"offset": [1, 0, -1]}}]"#,
    )
    .unwrap();
    let data = tmp.path().join("data");
    generate(&spec, &default_registry(), 8, &data).map_err(|e| e.to_string())?;
    let mut baseline: Option<BTreeMap<String, Vec<u8>>> = None;
    for jobs in [Some(1), Some(4), None] {
        for run in 0..2 {
            let mut config = RunConfig::new(&data, tmp.path().join(format!("out-{jobs:?}-{run}")));
            config.policy = PairingPolicy::AllPairs;
            config.jobs = jobs;
            run_batch(&config).map_err(|e| e.to_string())?;
            let files = artifacts(&config.output_dir);
            ensure!(files.len() == 4, "{} artifacts", files.len());
            match &baseline {
                None => baseline = Some(files),
                Some(b) => ensure!(b == &files, "jobs {jobs:?} run {run} differs"),
            }
        }
    }
    let rows = baseline.unwrap()[RECORDS_FILE]
        .iter()
        .filter(|&&c| c == b'\n')
        .count()
        - 1;
    Ok(format!(
        "6 runs byte-identical ({rows} records) for jobs 1, 4, max"
    ))
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// 34 labelled structures on a 256^3 grid: cortical regions as thick shells,
/// subcortical ones as solid ellipsoids.
fn head_volume(rng: &mut ChaCha8Rng) -> LabelVolume {
    let n = 256usize;
    let grid = Grid::axis_aligned([n; 3], [1.0; 3]).unwrap();
    let mut v = LabelVolume::zeros(grid);
    let registry = default_registry();
    let mut labels = Vec::new();
    for spec in registry.entries() {
        for side in [Side::Left, Side::Right] {
            labels.push((spec.class, *spec.ids(side).iter().next().unwrap()));
        }
    }
    let cell = [64usize, 85, 85];
    for (i, (class, label)) in labels.into_iter().enumerate() {
        let c = [
            (i % 4) * cell[0] + cell[0] / 2,
            (i / 4 % 3) * cell[1] + cell[1] / 2,
            (i / 12) * cell[2] + cell[2] / 2,
        ];
        let r = match class {
            RoiClass::Cortical => [28.0, 36.0, 36.0].map(|x: f64| x - rng.random_range(0.0..4.0)),
            RoiClass::Subcortical => {
                [14.0, 20.0, 17.0].map(|x: f64| x - rng.random_range(0.0..6.0))
            }
        };
        for z in c[2] - 40..c[2] + 40 {
            for y in c[1] - 40..c[1] + 40 {
                for x in c[0] - 31..c[0] + 31 {
                    let d = (((x as f64 - c[0] as f64) / r[0]).powi(2)
                        + ((y as f64 - c[1] as f64) / r[1]).powi(2)
                        + ((z as f64 - c[2] as f64) / r[2]).powi(2))
                    .sqrt();
                    let inside = match class {
                        RoiClass::Cortical => (0.8..=1.0).contains(&d),
                        RoiClass::Subcortical => d <= 1.0,
                    };
                    if inside {
                        v.set(x, y, z, label);
                    }
                }
            }
        }
    }
    v
}

fn performance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = head_volume(&mut rng);
    let mut shifted = oracle::shift_labels(a.labels(), [256; 3], [1, 0, 1]);
    for _ in 0..50_000 {
        let i = rng.random_range(0..shifted.len());
        shifted[i] = 0;
    }
    let b = LabelVolume::new(a.grid().clone(), shifted).unwrap();
    // Clearing the peak counter isolates this check's footprint when the
    // kernel allows it.
    let _ = fs::write("/proc/self/clear_refs", "5");

    let registry = default_registry();
    let start = Instant::now();
    let rows = evaluate_volumes(&a, &b, &registry, &[Side::Left, Side::Right], 1.0)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let peak = peak_rss_kib().ok_or("VmHWM unavailable")?;
    ensure!(rows.len() == 34, "{} rows", rows.len());
    ensure!(
        rows.iter().all(|(_, _, m)| m.undefined.is_none()),
        "an ROI came out empty"
    );
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    ensure!(peak < 2 * 1024 * 1024, "peak RSS {} MiB", peak / 1024);
    let worst = rows
        .iter()
        .map(|(_, _, m)| m.surface_dice.unwrap())
        .fold(1.0, f64::min);
    Ok(format!(
        "256^3 pair, 34 ROI/side rows in {:.2} s on one thread, peak RSS {} MiB, min sdice {worst:.3}",
        elapsed.as_secs_f64(),
        peak / 1024
    ))
}

fn nifti_io() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut truncations = 0;
    for i in 0..100 {
        let dims = random_dims(&mut rng, &(1..=18));
        let spacing = random_spacing(&mut rng, &(0.5..=2.0));
        let grid = oblique(&mut rng, dims, spacing);
        let max = [40u32, 30_000, i32::MAX as u32][i % 3];
        let labels = (0..grid.len())
            .map(|_| {
                if rng.random_bool(0.6) {
                    0
                } else {
                    rng.random_range(1..=max)
                }
            })
            .collect();
        let vol = LabelVolume::new(grid, labels).unwrap();
        let bytes = encode_label_volume(&vol).map_err(|e| e.to_string())?;
        ensure!(
            decode_label_volume(&bytes).ok().as_ref() == Some(&vol),
            "volume {i}: round trip differs"
        );

        let plain = tmp.path().join(format!("v{i}.nii"));
        let gz = tmp.path().join(format!("v{i}.nii.gz"));
        write_label_volume(&vol, &plain).map_err(|e| e.to_string())?;
        write_label_volume(&vol, &gz).map_err(|e| e.to_string())?;
        let (p, g) = (read_label_volume(&plain), read_label_volume(&gz));
        ensure!(
            p.as_ref().ok() == Some(&vol) && g.as_ref().ok() == Some(&vol),
            "volume {i}: file round trip differs"
        );
        ensure!(
            read_header(&plain).ok() == read_header(&gz).ok(),
            "volume {i}: gzip header differs"
        );

        let mut cuts = vec![0, 100, 347, 348, 351, 352, bytes.len() - 1];
        cuts.extend((0..8).map(|_| rng.random_range(0..bytes.len())));
        for cut in cuts {
            ensure!(
                decode_label_volume(&bytes[..cut]).is_err(),
                "volume {i}: {cut}-byte prefix accepted"
            );
            truncations += 1;
        }
        let packed = fs::read(&gz).unwrap();
        fs::write(&gz, &packed[..packed.len() * 2 / 3]).unwrap();
        ensure!(
            read_label_volume(&gz).is_err(),
            "volume {i}: truncated gzip accepted"
        );
    }
    Ok(format!(
        "100 volumes exact, gzip/plain parity, {truncations} truncations rejected"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("analytic cases", analytic_cases),
        ("metric laws", metric_laws),
        ("MAPE and shared-denominator surface dice", literal_forms),
        ("label resampling", resampling),
        ("end-to-end synthetic audit", synthetic_audit),
        ("trend recovery", trend_recovery),
        ("determinism across worker counts", determinism),
        ("256^3 performance", performance),
        ("NIfTI I/O", nifti_io),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
