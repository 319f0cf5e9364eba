use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{SessionEntry, SessionMeta};
use crate::error::{Error, Result};
use crate::nifti::read_header;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetLayout {
    /// `sub-*/ses-*/anat/*_dseg.nii[.gz]`
    #[default]
    BidsLike,
    /// Label maps directly under the root, named `sub-<s>_ses-<x>[_*].nii[.gz]`.
    FlatPairs,
}

/// Finds every session's label volume and its metadata, sorted by
/// (subject, session).
pub fn scan_dataset(root: impl AsRef<Path>, layout: DatasetLayout) -> Result<Vec<SessionEntry>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "dataset root is not a directory",
            ),
        ));
    }
    let found = match layout {
        DatasetLayout::BidsLike => scan_bids(root)?,
        DatasetLayout::FlatPairs => scan_flat(root)?,
    };
    let mut by_key: BTreeMap<(String, String), SessionEntry> = BTreeMap::new();
    for (subject, session, path) in found {
        let key = (subject.clone(), session.clone());
        if let Some(existing) = by_key.get(&key) {
            return Err(Error::DuplicateSession {
                subject,
                session,
                first: existing.path.clone(),
                second: path,
            });
        }
        let meta = load_meta(subject, session, &path)?;
        by_key.insert(key, SessionEntry { meta, path });
    }
    if by_key.is_empty() {
        return Err(Error::NoSessions(root.to_path_buf()));
    }
    Ok(by_key.into_values().collect())
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn file_name(path: &Path) -> &str {
    path.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

fn nifti_stem(name: &str) -> Option<&str> {
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
}

fn scan_bids(root: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut found = Vec::new();
    for sub in sorted_entries(root)? {
        let Some(subject) = file_name(&sub).strip_prefix("sub-").map(str::to_string) else {
            continue;
        };
        if !sub.is_dir() {
            continue;
        }
        for ses in sorted_entries(&sub)? {
            let Some(session) = file_name(&ses).strip_prefix("ses-").map(str::to_string) else {
                continue;
            };
            let anat = ses.join("anat");
            if !anat.is_dir() {
                continue;
            }
            for file in sorted_entries(&anat)? {
                let is_dseg = nifti_stem(file_name(&file)).is_some_and(|s| s.ends_with("_dseg"));
                if is_dseg && file.is_file() {
                    found.push((subject.clone(), session.clone(), file));
                }
            }
        }
    }
    Ok(found)
}

/// BIDS entity value, e.g. `entity("sub-01_ses-02_dseg", "ses")` is `02`.
fn entity<'a>(stem: &'a str, key: &str) -> Option<&'a str> {
    stem.split('_')
        .find_map(|part| part.strip_prefix(key)?.strip_prefix('-'))
        .filter(|v| !v.is_empty())
}

fn scan_flat(root: &Path) -> Result<Vec<(String, String, PathBuf)>> {
    let mut found = Vec::new();
    for file in sorted_entries(root)? {
        if !file.is_file() {
            continue;
        }
        let Some(stem) = nifti_stem(file_name(&file)) else {
            continue;
        };
        if let (Some(sub), Some(ses)) = (entity(stem, "sub"), entity(stem, "ses")) {
            found.push((sub.to_string(), ses.to_string(), file.clone()));
        }
    }
    Ok(found)
}

/// Sidecar JSON path next to a label volume.
pub(crate) fn sidecar_path(volume: &Path) -> PathBuf {
    let name = file_name(volume);
    let stem = nifti_stem(name).unwrap_or(name);
    volume.with_file_name(format!("{stem}.json"))
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "PascalCase")]
struct Sidecar {
    echo_time: Option<f64>,
    repetition_time: Option<f64>,
    acquisition_date: Option<String>,
    acquisition_date_time: Option<String>,
    scanner_tag: Option<String>,
    site_tag: Option<String>,
    institution_name: Option<String>,
    manufacturer: Option<String>,
    manufacturers_model_name: Option<String>,
    device_serial_number: Option<String>,
}

fn parse_date(path: &Path, s: &str) -> Result<NaiveDate> {
    let day = s.get(..10).unwrap_or(s);
    NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: format!("bad ISO-8601 date {s:?}: {e}"),
    })
}

fn non_empty(s: Option<String>) -> Option<String> {
    s.map(|v| v.trim().to_string()).filter(|v| !v.is_empty())
}

fn load_meta(subject: String, session: String, volume: &Path) -> Result<SessionMeta> {
    let header = read_header(volume)?;
    let mut meta = SessionMeta {
        voxel_size_mm: Some(header.spacing()),
        ..SessionMeta::new(subject, session)
    };
    let sidecar = sidecar_path(volume);
    if !sidecar.is_file() {
        return Ok(meta);
    }
    let text = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let s: Sidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: sidecar.clone(),
        message: e.to_string(),
    })?;
    // BIDS stores times in seconds.
    meta.echo_time_ms = s.echo_time.map(|t| t * 1000.0);
    meta.repetition_time_ms = s.repetition_time.map(|t| t * 1000.0);
    if let Some(d) = s.acquisition_date.or(s.acquisition_date_time) {
        meta.acquisition_date = Some(parse_date(&sidecar, &d)?);
    }
    meta.site_tag = non_empty(s.site_tag).or_else(|| non_empty(s.institution_name));
    meta.scanner_tag = non_empty(s.scanner_tag).or_else(|| {
        let parts: Vec<String> = [
            s.manufacturer,
            s.manufacturers_model_name,
            s.device_serial_number,
        ]
        .into_iter()
        .filter_map(non_empty)
        .collect();
        (!parts.is_empty()).then(|| parts.join("/"))
    });
    Ok(meta)
}
