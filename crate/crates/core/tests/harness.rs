use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use segrepro_core::harness::{
    build_plan, evaluate_plan, scan_dataset, summarize_acquisition, DatasetLayout, EvalConfig,
    GroupTag, PairingPolicy, ReferenceChoice, ResampleConfig, SessionEntry, SessionMeta,
};
use segrepro_core::synth::{generate, BlobShape, SynthRoi, SynthSpec};
use segrepro_core::{default_registry, write_label_volume, Error, Grid, LabelVolume, Side};

fn small_spec(sessions: usize) -> SynthSpec {
    let mut spec = SynthSpec::new(sessions);
    spec.rois = ["Hippocampus", "Amygdala", "Insula"]
        .iter()
        .flat_map(|name| {
            [Side::Left, Side::Right].map(|side| SynthRoi {
                name: name.to_string(),
                side,
                shape: BlobShape::Ball { radius: 3.0 },
            })
        })
        .collect();
    spec.margin = 2;
    spec
}

fn entry(session: &str, date: Option<(i32, u32, u32)>) -> SessionEntry {
    let mut meta = SessionMeta::new("01", session);
    meta.acquisition_date = date.map(|(y, m, d)| NaiveDate::from_ymd_opt(y, m, d).unwrap());
    SessionEntry {
        meta,
        path: format!("{session}.nii").into(),
    }
}

#[test]
fn scan_reads_bids_tree_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(3);
    spec.scanner_tags = vec!["A".into(), "A".into(), "B".into()];
    generate(&spec, &default_registry(), 1, dir.path()).unwrap();
    let sidecar = dir
        .path()
        .join("sub-01/ses-02/anat/sub-01_ses-02_dseg.json");
    fs::write(
        &sidecar,
        r#"{"AcquisitionDateTime": "2021-05-04T10:11:12", "EchoTime": 0.00293,
            "RepetitionTime": 2.3, "Manufacturer": "Siemens", "ManufacturersModelName": "Prisma",
            "InstitutionName": "Site X"}"#,
    )
    .unwrap();
    let sessions = scan_dataset(dir.path(), DatasetLayout::BidsLike).unwrap();
    assert_eq!(sessions.len(), 3);
    let ids: Vec<_> = sessions.iter().map(|s| s.meta.key()).collect();
    assert_eq!(ids, ["01/01", "01/02", "01/03"]);
    let m = &sessions[1].meta;
    assert_eq!(m.acquisition_date, NaiveDate::from_ymd_opt(2021, 5, 4));
    assert!((m.echo_time_ms.unwrap() - 2.93).abs() < 1e-12);
    assert!((m.repetition_time_ms.unwrap() - 2300.0).abs() < 1e-9);
    assert_eq!(m.scanner_tag.as_deref(), Some("Siemens/Prisma"));
    assert_eq!(m.site_tag.as_deref(), Some("Site X"));
    assert_eq!(sessions[2].meta.scanner_tag.as_deref(), Some("B"));
    assert_eq!(sessions[0].meta.voxel_size_mm, Some([1.0; 3]));
}

#[test]
fn scan_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        scan_dataset(dir.path(), DatasetLayout::BidsLike),
        Err(Error::NoSessions(_))
    ));
    assert!(scan_dataset(dir.path().join("missing"), DatasetLayout::BidsLike).is_err());

    let grid = Grid::axis_aligned([2, 2, 2], [1.0; 3]).unwrap();
    let vol = LabelVolume::zeros(grid);
    write_label_volume(&vol, dir.path().join("sub-01_ses-01_dseg.nii.gz")).unwrap();
    write_label_volume(&vol, dir.path().join("sub-01_ses-01_run-2.nii")).unwrap();
    assert!(matches!(
        scan_dataset(dir.path(), DatasetLayout::FlatPairs),
        Err(Error::DuplicateSession { .. })
    ));

    fs::remove_file(dir.path().join("sub-01_ses-01_run-2.nii")).unwrap();
    write_label_volume(&vol, dir.path().join("sub-01_ses-02.nii")).unwrap();
    fs::write(
        dir.path().join("sub-01_ses-02.json"),
        r#"{"AcquisitionDate": "May 4"}"#,
    )
    .unwrap();
    let err = scan_dataset(dir.path(), DatasetLayout::FlatPairs).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }), "{err}");
    assert!(err.to_string().contains("sub-01_ses-02.json"));
}

#[test]
fn pairing_policies_and_ordering() {
    let sessions = vec![
        entry("c", None),
        entry("b", Some((2020, 3, 1))),
        entry("a", Some((2020, 6, 1))),
        entry("d", Some((2020, 1, 1))),
    ];
    let plan = build_plan(&sessions, PairingPolicy::Consecutive).unwrap();
    let pairs: Vec<_> = plan
        .pairs
        .iter()
        .map(|p| (p.a.meta.session_id.as_str(), p.b.meta.session_id.as_str()))
        .collect();
    assert_eq!(pairs, [("d", "b"), ("b", "a"), ("a", "c")]);
    assert_eq!(
        build_plan(&sessions, PairingPolicy::FirstReference)
            .unwrap()
            .pairs
            .len(),
        3
    );
    assert_eq!(
        build_plan(&sessions, PairingPolicy::AllPairs)
            .unwrap()
            .pairs
            .len(),
        6
    );
    assert!(matches!(
        build_plan(&sessions[..1], PairingPolicy::Consecutive),
        Err(Error::TooFewSessions)
    ));
}

#[test]
fn evaluation_is_deterministic_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(4);
    spec.scanner_tags = vec!["A".into(), "B".into()];
    spec.perturbations = serde_json::from_str(
        r#"[{"session": 2, "roi": "Hippocampus", "side": "left", "erode": {"shells": 1}},
            {"session": 3, "roi": "Insula", "side": "right", "noise_flips": {"count": 5}}]"#,
    )
    .unwrap();
    generate(&spec, &default_registry(), 3, dir.path()).unwrap();
    let sessions = scan_dataset(dir.path(), DatasetLayout::BidsLike).unwrap();
    let plan = build_plan(&sessions, PairingPolicy::AllPairs).unwrap();
    let registry = default_registry();
    let run = |jobs| {
        let config = EvalConfig {
            jobs: Some(jobs),
            ..EvalConfig::default()
        };
        evaluate_plan(&plan, &registry, &config).unwrap()
    };
    let one = run(1);
    assert_eq!(one.len(), 6 * 17 * 2);
    assert_eq!(one, run(4));
    assert!(one
        .iter()
        .all(|r| r.group_tag == GroupTag::CrossScanner || r.group_tag == GroupTag::WithinScanner));
    // ROIs not synthesised are empty in both sessions.
    let absent = one.iter().find(|r| r.roi_name == "Thalamus").unwrap();
    assert!(absent.metrics.undefined.is_some());
    let eroded = one
        .iter()
        .find(|r| r.session_b == "02" && r.roi_name == "Hippocampus" && r.side == Side::Left)
        .unwrap();
    assert!(eroded.metrics.dice.unwrap() < 1.0);
    assert!(eroded.metrics.volume_b_cm3 < eroded.metrics.volume_a_cm3);
}

fn write_pair(dir: &Path, spacing_b: [f64; 3]) {
    let mk = |spacing: [f64; 3]| {
        let grid = Grid::axis_aligned([10, 10, 10], spacing).unwrap();
        let mut v = LabelVolume::zeros(grid);
        for z in 3..7 {
            for y in 3..7 {
                for x in 3..7 {
                    v.set(x, y, z, 17);
                }
            }
        }
        v
    };
    write_label_volume(&mk([1.0; 3]), dir.join("sub-01_ses-01_dseg.nii")).unwrap();
    write_label_volume(&mk(spacing_b), dir.join("sub-01_ses-02_dseg.nii")).unwrap();
}

#[test]
fn grid_mismatch_needs_resampling() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), [1.0, 1.0, 2.0]);
    let sessions = scan_dataset(dir.path(), DatasetLayout::FlatPairs).unwrap();
    let plan = build_plan(&sessions, PairingPolicy::Consecutive).unwrap();
    let registry = default_registry();
    let err = evaluate_plan(&plan, &registry, &EvalConfig::default()).unwrap_err();
    assert!(matches!(err.root(), Error::GridMismatch(_)), "{err}");
    assert!(err.to_string().contains("01/01"));

    let config = EvalConfig {
        resample: Some(ResampleConfig {
            reference: ReferenceChoice::FirstSession,
            transforms: Default::default(),
        }),
        ..EvalConfig::default()
    };
    let records = evaluate_plan(&plan, &registry, &config).unwrap();
    let hippo = records
        .iter()
        .find(|r| r.roi_name == "Hippocampus" && r.side == Side::Left)
        .unwrap();
    assert_eq!(hippo.resample_delta_a_cm3, Some(0.0));
    // Session B's slab (z indices 3..7 at 2 mm, 0.128 cm³) is pulled onto
    // the 1 mm grid, where reference slices z = 5..=9 round into it:
    // 16 x 5 voxels of 1 mm³.
    assert!((hippo.resample_delta_b_cm3.unwrap() - (0.080 - 0.128)).abs() < 1e-12);
    assert!(hippo.metrics.dice.unwrap() < 1.0);
}

#[test]
fn unknown_transform_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_pair(dir.path(), [1.0; 3]);
    let sessions = scan_dataset(dir.path(), DatasetLayout::FlatPairs).unwrap();
    let plan = build_plan(&sessions, PairingPolicy::Consecutive).unwrap();
    let config = EvalConfig {
        resample: Some(ResampleConfig {
            reference: ReferenceChoice::FirstSession,
            transforms: [("01/09".to_string(), dir.path().join("t.txt"))].into(),
        }),
        ..EvalConfig::default()
    };
    assert!(matches!(
        evaluate_plan(&plan, &default_registry(), &config),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn acquisition_summary_of_sessions() {
    let mut a = SessionMeta::new("01", "01");
    a.acquisition_date = NaiveDate::from_ymd_opt(2020, 1, 1);
    a.echo_time_ms = Some(2.0);
    a.voxel_size_mm = Some([1.0, 1.0, 1.2]);
    let mut b = SessionMeta::new("01", "02");
    b.acquisition_date = NaiveDate::from_ymd_opt(2020, 1, 8);
    b.echo_time_ms = Some(3.0);
    b.voxel_size_mm = Some([0.9, 0.9, 1.2]);
    let s = summarize_acquisition(&[a, b]);
    assert_eq!(s.test_retest_gaps_days, [7]);
    let te = s.parameter("echo_time_ms").unwrap();
    assert_eq!((te.min, te.max, te.unique), (Some(2.0), Some(3.0), Some(2)));
    assert_eq!(s.parameter("repetition_time_ms").unwrap().n, 0);
    assert_eq!(s.parameter("voxel_size_z_mm").unwrap().unique, Some(1));
}
