//! `segrepro`: reproducibility metrics for brain-segmentation label maps.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use segrepro_core::Error;

/// Exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Bad arguments, grid mismatch or otherwise unusable input layout.
    Usage = 2,
    /// A file could not be read or parsed.
    Parse = 3,
    /// An internal consistency check failed.
    Invariant = 4,
}

pub fn status_of(error: &Error) -> Status {
    match error.root() {
        Error::Io { .. }
        | Error::Nifti { .. }
        | Error::Transform { .. }
        | Error::Parse { .. }
        | Error::Registry(_) => Status::Parse,
        Error::Invariant(_) | Error::Undefined(_) | Error::EmptyMask => Status::Invariant,
        _ => Status::Usage,
    }
}

#[derive(Parser, Debug)]
#[command(name = "segrepro", version, about)]
struct Cli {
    /// Surface Dice tolerance in mm.
    #[arg(long, global = true, value_name = "MM")]
    tolerance_mm: Option<f64>,

    /// Session pairing: consecutive, first-reference or all-pairs.
    #[arg(long, global = true)]
    policy: Option<String>,

    /// ROI registry JSON replacing the built-in table.
    #[arg(long, global = true, value_name = "PATH")]
    registry: Option<PathBuf>,

    /// Resampling reference: `first-session` or `atlas <path>`.
    #[arg(long = "ref", global = true, value_name = "REF")]
    reference: Option<String>,

    /// Worker threads for pair evaluation.
    #[arg(long, global = true, env = "SEGREPRO_JOBS", value_name = "N")]
    jobs: Option<usize>,

    /// Seed for synthetic data and self-test instances.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compare two label volumes ROI by ROI.
    Compare(commands::CompareArgs),
    /// Evaluate a dataset and write records.csv, summary.json, trend.csv and
    /// filter_report.json.
    Batch(commands::BatchArgs),
    /// Generate a synthetic dataset with known perturbations.
    Synth(commands::SynthArgs),
    /// Check the metric kernels against brute-force oracles, or check the
    /// consistency of batch outputs.
    Selftest(commands::SelftestArgs),
}

/// Flags shared by several subcommands.
#[derive(Debug, Default)]
pub struct Globals {
    pub tolerance_mm: Option<f64>,
    pub policy: Option<String>,
    pub registry: Option<PathBuf>,
    pub reference: Option<String>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

/// Folds the two-token form `--ref atlas <path>` into `--ref=atlas:<path>`.
fn normalize_args(args: impl IntoIterator<Item = OsString>) -> Vec<OsString> {
    let mut out: Vec<OsString> = Vec::new();
    let mut iter = args.into_iter().peekable();
    while let Some(arg) = iter.next() {
        if arg == "--ref" && iter.peek().is_some_and(|v| v == "atlas") {
            iter.next();
            if let Some(path) = iter.next() {
                let mut joined = OsString::from("--ref=atlas:");
                joined.push(path);
                out.push(joined);
                continue;
            }
            out.extend([arg, OsString::from("atlas")]);
            continue;
        }
        out.push(arg);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(normalize_args(std::env::args_os()));
    let globals = Globals {
        tolerance_mm: cli.tolerance_mm,
        policy: cli.policy,
        registry: cli.registry,
        reference: cli.reference,
        jobs: cli.jobs,
        seed: cli.seed,
    };
    let outcome = match cli.command {
        Command::Compare(args) => commands::compare(args, &globals),
        Command::Batch(args) => commands::batch(args, &globals),
        Command::Synth(args) => commands::synth(args, &globals),
        Command::Selftest(args) => commands::selftest(args, &globals),
    };
    match outcome {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(status)) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("segrepro: {e}");
            ExitCode::from(status_of(&e) as u8)
        }
    }
}
