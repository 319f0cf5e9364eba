use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use segrepro_core::harness::{PairingPolicy, ReferenceChoice, ResampleConfig};
use segrepro_core::report::{
    check_outputs, compare_volumes, format_compare_table, run_batch, CompareOutput, RunConfig,
};
use segrepro_core::selftest::run_selftest;
use segrepro_core::synth::{generate, SynthSpec};
use segrepro_core::{
    default_registry, read_affine_transform, read_grid, read_label_volume, resample_labels,
    AffineTransform, Error, LabelVolume, Result, RoiRegistry, Side, DEFAULT_TOLERANCE_MM,
};

use crate::{Globals, Status};

type Outcome = Result<Option<Status>>;

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub volume_a: PathBuf,
    pub volume_b: PathBuf,
    /// Hemispheres to report, comma separated: left, right, both.
    #[arg(long, value_delimiter = ',', default_value = "left,right")]
    pub sides: Vec<String>,
    /// Also write the result as JSON to PATH; `-` prints JSON instead of the table.
    #[arg(long, value_name = "PATH")]
    pub json: Option<PathBuf>,
    /// Resample volume B onto volume A's grid (or the `--ref` atlas grid).
    #[arg(long)]
    pub resample: bool,
    /// Affine taking reference world coordinates to volume B's; implies --resample.
    #[arg(long, value_name = "PATH")]
    pub transform: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BatchArgs {
    /// Run configuration (JSON).
    pub config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long, value_name = "DIR")]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Synthetic dataset specification (JSON).
    pub spec: PathBuf,
    /// Directory to write the dataset into.
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelftestArgs {
    /// Random instances per check.
    #[arg(long, default_value_t = 200)]
    pub cases: usize,
    /// Instead of the kernel checks, re-derive summary.json from records.csv
    /// in DIR and cross-check the other batch outputs.
    #[arg(long, value_name = "DIR")]
    pub check_outputs: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

fn registry(globals: &Globals) -> Result<RoiRegistry> {
    match &globals.registry {
        Some(p) => RoiRegistry::from_json_file(p),
        None => Ok(default_registry()),
    }
}

fn tolerance(globals: &Globals, fallback: f64) -> Result<f64> {
    let t = globals.tolerance_mm.unwrap_or(fallback);
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "--tolerance-mm must be positive, got {t}"
        )));
    }
    Ok(t)
}

fn parse_sides(values: &[String]) -> Result<Vec<Side>> {
    values
        .iter()
        .map(|s| {
            Side::parse(s.trim())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown side {s:?}")))
        })
        .collect()
}

fn parse_reference(value: &str) -> ReferenceChoice {
    match value {
        "first-session" | "first_session" => ReferenceChoice::FirstSession,
        path => ReferenceChoice::Atlas(PathBuf::from(path.strip_prefix("atlas:").unwrap_or(path))),
    }
}

fn write_json<T: serde::Serialize>(value: &T, target: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serialisable") + "\n";
    if target == Path::new("-") {
        print!("{text}");
        Ok(())
    } else {
        fs::write(target, text).map_err(|e| Error::Io {
            path: target.to_path_buf(),
            source: e,
        })
    }
}

pub fn compare(args: CompareArgs, globals: &Globals) -> Outcome {
    let tol = tolerance(globals, DEFAULT_TOLERANCE_MM)?;
    let sides = parse_sides(&args.sides)?;
    let registry = registry(globals)?;
    let a = read_label_volume(&args.volume_a)?;
    let b = read_label_volume(&args.volume_b)?;
    let reference = globals.reference.as_deref().map(parse_reference);
    let resampled = args.resample || args.transform.is_some() || reference.is_some();
    let (a, b): (LabelVolume, LabelVolume) = if resampled {
        let grid = match &reference {
            Some(ReferenceChoice::Atlas(p)) => read_grid(p)?,
            _ => a.grid().clone(),
        };
        let t = match &args.transform {
            Some(p) => read_affine_transform(p)?,
            None => AffineTransform::identity(),
        };
        let a = if a.grid() == &grid {
            a
        } else {
            resample_labels(&a, &AffineTransform::identity(), &grid)?
        };
        (a, resample_labels(&b, &t, &grid)?)
    } else {
        (a, b)
    };
    let rows = compare_volumes(&a, &b, &registry, &sides, tol).map_err(|e| match e {
        Error::GridMismatch(m) => Error::GridMismatch(format!(
            "{} vs {}: {m}; pass --resample or --transform to compare across grids",
            args.volume_a.display(),
            args.volume_b.display()
        )),
        other => other,
    })?;
    let output = CompareOutput {
        volume_a: args.volume_a.display().to_string(),
        volume_b: args.volume_b.display().to_string(),
        tolerance_mm: tol,
        resampled,
        rows,
    };
    let json_to_stdout = args.json.as_deref() == Some(Path::new("-"));
    if !json_to_stdout {
        print!("{}", format_compare_table(&output.rows));
    }
    if let Some(target) = &args.json {
        write_json(&output, target)?;
    }
    Ok(None)
}

pub fn batch(args: BatchArgs, globals: &Globals) -> Outcome {
    let mut config = RunConfig::from_file(&args.config)?;
    if let Some(t) = globals.tolerance_mm {
        config.tolerance_mm = t;
    }
    if let Some(p) = &globals.policy {
        config.policy = PairingPolicy::parse(p)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown policy {p:?}")))?;
    }
    if let Some(r) = &globals.registry {
        config.registry = Some(r.clone());
    }
    if let Some(r) = &globals.reference {
        let reference = parse_reference(r);
        match config.resample.as_mut() {
            Some(rs) => rs.reference = reference,
            None => {
                config.resample = Some(ResampleConfig {
                    reference,
                    transforms: Default::default(),
                })
            }
        }
    }
    if let Some(j) = globals.jobs {
        config.jobs = Some(j);
    }
    if let Some(s) = globals.seed {
        config.seed = Some(s);
    }
    if let Some(o) = args.output {
        config.output_dir = o;
    }
    config.validate()?;
    let result = run_batch(&config)?;
    let t = &result.summary.totals;
    println!(
        "{} pairs, {} records ({} undefined) written to {}",
        t.n_pairs,
        t.n_records,
        t.n_undefined,
        config.output_dir.display()
    );
    for f in &result.filters {
        let r = &f.report;
        println!(
            "filter {:?} < {} ({:?}): removed {}/{} ({:.1}%)",
            r.rule.metric,
            r.rule.threshold,
            r.rule.scope,
            r.structures_removed,
            r.structures_total,
            r.percent_filtered
        );
    }
    Ok(None)
}

pub fn synth(args: SynthArgs, globals: &Globals) -> Outcome {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::Io {
        path: args.spec.clone(),
        source: e,
    })?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: args.spec.clone(),
        message: e.to_string(),
    })?;
    let seed = globals.seed.unwrap_or(0);
    let manifest = generate(&spec, &registry(globals)?, seed, &args.out)?;
    println!(
        "{} sessions, {} blobs, {} perturbations (seed {seed}) written to {}",
        spec.sessions,
        manifest.blobs.len(),
        manifest.perturbations.len(),
        args.out.display()
    );
    Ok(None)
}

pub fn selftest(args: SelftestArgs, globals: &Globals) -> Outcome {
    let mut out = std::io::stdout().lock();
    if let Some(dir) = &args.check_outputs {
        let report = check_outputs(dir)?;
        if args.json {
            write_json(&report, Path::new("-"))?;
        } else {
            let verdict = if report.is_consistent() {
                "PASS"
            } else {
                "FAIL"
            };
            let _ = writeln!(
                out,
                "{verdict} outputs in {}: {} records, {} groups",
                dir.display(),
                report.records,
                report.groups
            );
            for m in &report.mismatches {
                let _ = writeln!(out, "  {m}");
            }
        }
        return Ok((!report.is_consistent()).then_some(Status::Invariant));
    }
    let report = run_selftest(globals.seed.unwrap_or(0), args.cases);
    if args.json {
        write_json(&report, Path::new("-"))?;
    } else {
        for c in &report.checks {
            let verdict = if c.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{verdict} {} ({} cases, {} failures, max |error| {:e})",
                c.name, c.cases, c.failures, c.max_abs_error
            );
            if let Some(f) = &c.first_failure {
                let _ = writeln!(out, "  first failure: {f}");
            }
        }
    }
    Ok((!report.passed()).then_some(Status::Invariant))
}
