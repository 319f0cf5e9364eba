use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use segrepro_core::harness::{GroupTag, MetricRecord};
use segrepro_core::stats::{
    apply_filter, describe, fit_trend_years, group_variability, mape, BandKind, FilterMetric,
    FilterRule, FilterScope,
};
use segrepro_core::{Emptiness, PairMetrics, RoiClass, Side};

/// R² band of the noisy-trend fixture: the 0.1% and 99.9% quantiles of R²
/// over 200 000 Monte-Carlo replicates of the same design, widened slightly.
const NOISY_R2_BAND: (f64, f64) = (8.1e-5, 0.3596);

fn noisy_design() -> Vec<f64> {
    (0..73).map(|i| 17.0 * i as f64 / 72.0).collect()
}

fn noisy_series(seed: u64) -> (Vec<f64>, Vec<f64>) {
    let years = noisy_design();
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vols = years
        .iter()
        .map(|t| 4.5 + 0.01 * t + noise.sample(&mut rng))
        .collect();
    (years, vols)
}

#[test]
fn noisy_trend_recovered_within_three_standard_errors() {
    let (years, vols) = noisy_series(73);
    let fit = fit_trend_years(&years, &vols, BandKind::Mean).unwrap();
    assert!(
        (fit.slope - 0.01).abs() <= 3.0 * fit.slope_se,
        "{} ± {}",
        fit.slope,
        fit.slope_se
    );
    assert!(
        (NOISY_R2_BAND.0..=NOISY_R2_BAND.1).contains(&fit.r_squared),
        "R² {}",
        fit.r_squared
    );
    for i in 0..fit.n() {
        assert!(fit.ci_lower[i] <= fit.fitted[i] && fit.fitted[i] <= fit.ci_upper[i]);
    }
}

#[test]
fn three_standard_error_rule_is_calibrated() {
    // A small re-run of the Monte-Carlo oracle: the slope lands within three
    // standard errors in about 99.6% of replicates.
    let reps = 2000;
    let hits = (0..reps)
        .filter(|&s| {
            let (years, vols) = noisy_series(10_000 + s);
            let fit = fit_trend_years(&years, &vols, BandKind::Mean).unwrap();
            (fit.slope - 0.01).abs() <= 3.0 * fit.slope_se
        })
        .count();
    assert!(hits as f64 / reps as f64 >= 0.985, "{hits}/{reps}");
}

#[test]
fn noiseless_line_is_exact() {
    let years = noisy_design();
    let vols: Vec<f64> = years.iter().map(|t| 4.5 + 0.01 * t).collect();
    let fit = fit_trend_years(&years, &vols, BandKind::Observation).unwrap();
    assert!((fit.slope - 0.01).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
}

fn record(
    class: RoiClass,
    dice: Option<f64>,
    sdice: Option<f64>,
    va: f64,
    vb: f64,
) -> MetricRecord {
    MetricRecord {
        subject_id: "01".into(),
        session_a: "01".into(),
        session_b: "02".into(),
        date_a: None,
        date_b: None,
        roi_name: "R".into(),
        roi_class: class,
        side: Side::Left,
        group_tag: GroupTag::Unknown,
        metrics: PairMetrics {
            dice,
            surface_dice: sdice,
            hd95_mm: dice.map(|_| 1.0),
            volume_a_cm3: va,
            volume_b_cm3: vb,
            tolerance_mm: 1.0,
            undefined: dice.is_none().then_some(Emptiness::SecondEmpty),
        },
        resample_delta_a_cm3: None,
        resample_delta_b_cm3: None,
    }
}

fn records_strategy() -> impl Strategy<Value = Vec<MetricRecord>> {
    prop::collection::vec(
        (
            prop::bool::ANY,
            prop::option::weighted(0.9, 0.0f64..=1.0),
            0.0f64..=1.0,
            0.5f64..10.0,
            0.5f64..10.0,
        )
            .prop_map(|(cortical, d, s, va, vb)| {
                let class = if cortical {
                    RoiClass::Cortical
                } else {
                    RoiClass::Subcortical
                };
                record(class, d, d.map(|_| s), va, vb)
            }),
        1..60,
    )
}

proptest! {
    #[test]
    fn filter_partitions_input(records in records_strategy(), t in 0.0f64..=1.0) {
        for metric in [FilterMetric::Dice, FilterMetric::SurfaceDice] {
            for scope in [FilterScope::Cortical, FilterScope::Subcortical, FilterScope::All] {
                let rule = FilterRule::new(metric, t, scope).unwrap();
                let out = apply_filter(&records, &rule).unwrap();
                prop_assert_eq!(out.retained.len() + out.removed.len(), records.len());
                for r in &out.removed {
                    prop_assert!(scope.contains(r.roi_class));
                    prop_assert!(metric.value(r).is_none_or(|v| v < t));
                }
                for r in &out.retained {
                    prop_assert!(!scope.contains(r.roi_class) || metric.value(r).is_some_and(|v| v >= t));
                }
                let rep = &out.report;
                if rep.structures_total > 0 {
                    prop_assert_eq!(
                        rep.percent_filtered,
                        100.0 * rep.structures_removed as f64 / rep.structures_total as f64
                    );
                }
            }
        }
    }

    #[test]
    fn tighter_threshold_never_removes_less(records in records_strategy()) {
        let mut last: Vec<MetricRecord> = Vec::new();
        for t in [0.0, 0.3, 0.85, 0.90, 0.92, 0.95, 1.0] {
            let rule = FilterRule::new(FilterMetric::SurfaceDice, t, FilterScope::All).unwrap();
            let removed = apply_filter(&records, &rule).unwrap().removed;
            for r in &last {
                prop_assert!(removed.contains(r));
            }
            last = removed;
        }
    }

    #[test]
    fn mape_laws(vols in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..40)) {
        let m = mape(vols.iter().copied()).unwrap();
        prop_assert!(m >= 0.0);
        let mut rev = vols.clone();
        rev.reverse();
        prop_assert!((mape(rev).unwrap() - m).abs() <= 1e-9 * (1.0 + m));
        prop_assert_eq!(mape(vols.iter().map(|&(r, _)| (r, r))).unwrap(), 0.0);
    }

    #[test]
    fn trend_equivariance(
        vols in prop::collection::vec(1.0f64..10.0, 3..30),
        c in 0.5f64..20.0,
    ) {
        let years: Vec<f64> = (0..vols.len()).map(|i| 0.37 * i as f64).collect();
        let base = fit_trend_years(&years, &vols, BandKind::Mean).unwrap();
        let shifted: Vec<f64> = vols.iter().map(|v| v + c).collect();
        let scaled: Vec<f64> = vols.iter().map(|v| v * c).collect();
        let fs = fit_trend_years(&years, &shifted, BandKind::Mean).unwrap();
        let fc = fit_trend_years(&years, &scaled, BandKind::Mean).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
        prop_assert!(close(fs.slope, base.slope));
        prop_assert!(close(fs.intercept, base.intercept + c));
        prop_assert!((fs.r_squared - base.r_squared).abs() <= 1e-6);
        prop_assert!(close(fc.slope, c * base.slope));
        prop_assert!(close(fc.intercept, c * base.intercept));
        prop_assert!((fc.r_squared - base.r_squared).abs() <= 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.r_squared));
    }

    #[test]
    fn sd_translation_invariant_and_scale_equivariant(
        vals in prop::collection::vec(-10.0f64..10.0, 2..30),
        shift in -100.0f64..100.0,
        c in 0.1f64..10.0,
    ) {
        let sd = describe(&vals).summary().unwrap().sd;
        let moved: Vec<f64> = vals.iter().map(|v| v + shift).collect();
        let scaled: Vec<f64> = vals.iter().map(|v| v * c).collect();
        prop_assert!((describe(&moved).summary().unwrap().sd - sd).abs() <= 1e-9 * (1.0 + shift.abs()));
        prop_assert!((describe(&scaled).summary().unwrap().sd - c * sd).abs() <= 1e-9 * (1.0 + c * sd));
    }
}

#[test]
fn group_variability_reports_insufficient_groups() {
    let g = group_variability(&[("a", 1.0), ("a", 2.0), ("b", 5.0)]);
    assert_eq!(g["a"].summary().unwrap().n, 2);
    assert!(g["b"].summary().is_none());
}
