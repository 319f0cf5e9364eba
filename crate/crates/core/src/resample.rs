//! Nearest-neighbour resampling of label volumes under a supplied affine.
//!
//! Transforms pull: they map a point in the reference (fixed) world frame to
//! the moving volume's world frame, the same direction ITK/ANTs transform
//! files use.

use std::path::Path;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::volume::{Grid, LabelVolume, ReferenceGrid};

const SINGULAR_DET: f64 = 1e-12;

/// World-mm (moving) ← world-mm (fixed) affine map.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineTransform {
    matrix: Matrix4<f64>,
    source_tag: String,
}

impl AffineTransform {
    pub fn new(matrix: Matrix4<f64>, source_tag: impl Into<String>) -> Result<Self> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "transform has non-finite entries".into(),
            ));
        }
        let last = matrix.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidArgument(
                "transform last row must be (0, 0, 0, 1)".into(),
            ));
        }
        let det = matrix.fixed_view::<3, 3>(0, 0).determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularTransform { det });
        }
        Ok(AffineTransform {
            matrix,
            source_tag: source_tag.into(),
        })
    }

    pub fn identity() -> Self {
        AffineTransform {
            matrix: Matrix4::identity(),
            source_tag: "identity".into(),
        }
    }

    pub fn translation(offset_mm: [f64; 3]) -> Self {
        AffineTransform {
            matrix: Matrix4::new_translation(&Vector3::from(offset_mm)),
            source_tag: format!("translation {offset_mm:?}"),
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn inverse(&self) -> AffineTransform {
        let matrix = self
            .matrix
            .try_inverse()
            .expect("constructor rejects singular transforms");
        AffineTransform {
            matrix,
            source_tag: format!("inverse of {}", self.source_tag),
        }
    }
}

/// Resamples `moving` onto `reference`: every reference voxel centre is
/// mapped through `transform` into the moving volume's index space and takes
/// the label of the nearest voxel (ties round away from zero). Centres that
/// land outside the moving grid get background 0.
pub fn resample_labels(
    moving: &LabelVolume,
    transform: &AffineTransform,
    reference: &ReferenceGrid,
) -> Result<LabelVolume> {
    let moving_inv = moving
        .affine()
        .try_inverse()
        .ok_or_else(|| Error::Geometry("moving volume affine is not invertible".into()))?;
    let to_moving_index = moving_inv * transform.matrix() * reference.affine();
    let [mx, my, mz] = moving.dims();
    let [rx, ry, rz] = reference.dims();
    let src = moving.labels();
    let mut labels = Vec::with_capacity(reference.len());
    for z in 0..rz {
        for y in 0..ry {
            for x in 0..rx {
                let p = to_moving_index * Vector4::new(x as f64, y as f64, z as f64, 1.0);
                let (ix, iy, iz) = (p[0].round(), p[1].round(), p[2].round());
                let inside = ix >= 0.0
                    && iy >= 0.0
                    && iz >= 0.0
                    && ix < mx as f64
                    && iy < my as f64
                    && iz < mz as f64;
                labels.push(if inside {
                    src[ix as usize + mx * (iy as usize + my * iz as usize)]
                } else {
                    0
                });
            }
        }
    }
    LabelVolume::new(reference.clone(), labels)
}

/// Grid of an existing volume, as a resampling target.
pub fn reference_of(volume: &LabelVolume) -> Grid {
    volume.grid().clone()
}

/// Reads a transform from either a plain-text 4×4 row-major matrix or an
/// ITK text affine (`Parameters:` with 9 matrix + 3 translation values and
/// `FixedParameters:` centre).
///
/// ITK parameters are composed as `y = A (x - c) + t + c` and taken in the
/// same world frame as the label volumes; no LPS/RAS flip is applied.
pub fn read_affine_transform(path: impl AsRef<Path>) -> Result<AffineTransform> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let malformed = |message: String| Error::Transform {
        path: path.to_path_buf(),
        message,
    };
    let matrix = if text
        .lines()
        .any(|l| l.trim_start().starts_with("Parameters:"))
    {
        parse_itk(&text).map_err(malformed)?
    } else {
        parse_plain(&text).map_err(malformed)?
    };
    AffineTransform::new(matrix, tag).map_err(|e| match e {
        Error::SingularTransform { .. } => e,
        other => malformed(other.to_string()),
    })
}

fn numbers(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}

fn parse_plain(text: &str) -> std::result::Result<Matrix4<f64>, String> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(numbers)
        .collect::<std::result::Result<_, _>>()?;
    if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
        let shape: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(format!(
            "expected a 4x4 matrix, found rows of lengths {shape:?}"
        ));
    }
    Ok(Matrix4::from_fn(|r, c| rows[r][c]))
}

fn parse_itk(text: &str) -> std::result::Result<Matrix4<f64>, String> {
    let mut params = None;
    let mut fixed = None;
    for line in text.lines().map(str::trim) {
        if let Some(rest) = line.strip_prefix("Parameters:") {
            params = Some(numbers(rest)?);
        } else if let Some(rest) = line.strip_prefix("FixedParameters:") {
            fixed = Some(numbers(rest)?);
        }
    }
    let params = params.ok_or("missing Parameters line")?;
    if params.len() != 12 {
        return Err(format!(
            "expected 12 affine parameters, found {}",
            params.len()
        ));
    }
    let center = match fixed {
        None => Vector3::zeros(),
        Some(f) if f.len() == 3 => Vector3::new(f[0], f[1], f[2]),
        Some(f) => return Err(format!("expected 3 fixed parameters, found {}", f.len())),
    };
    let a = Matrix3::from_row_slice(&params[..9]);
    let t = Vector3::new(params[9], params[10], params[11]);
    let offset = t + center - a * center;
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&a);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&offset);
    Ok(m)
}
