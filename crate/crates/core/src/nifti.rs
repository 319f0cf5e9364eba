//! NIfTI-1 single-file (`n+1`) reader and writer for label maps.
//!
//! Plain and gzip-compressed files are accepted; compression is detected
//! from the gzip magic bytes, not the file name. Either byte order is read,
//! and files are always written little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion};

use crate::error::{Error, Result};
use crate::volume::{Grid, LabelVolume};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag.
pub const MIN_VOX_OFFSET: usize = 352;

const INTEGRALITY_TOLERANCE: f64 = 1e-6;
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endian {
    Little,
    Big,
}

/// Voxel storage types accepted for label maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    U8,
    I16,
    I32,
    F32,
    F64,
    U16,
}

impl DataType {
    pub fn code(self) -> i16 {
        match self {
            DataType::U8 => 2,
            DataType::I16 => 4,
            DataType::I32 => 8,
            DataType::F32 => 16,
            DataType::F64 => 64,
            DataType::U16 => 512,
        }
    }

    pub fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => DataType::U8,
            4 => DataType::I16,
            8 => DataType::I32,
            16 => DataType::F32,
            64 => DataType::F64,
            512 => DataType::U16,
            _ => return None,
        })
    }

    pub fn byte_size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::I16 | DataType::U16 => 2,
            DataType::I32 | DataType::F32 => 4,
            DataType::F64 => 8,
        }
    }

    /// Smallest integer type in the u8 / i16 / i32 ladder that holds `max_label`.
    pub fn for_max_label(max_label: u32) -> Option<Self> {
        if max_label <= u8::MAX as u32 {
            Some(DataType::U8)
        } else if max_label <= i16::MAX as u32 {
            Some(DataType::I16)
        } else if max_label <= i32::MAX as u32 {
            Some(DataType::I32)
        } else {
            None
        }
    }
}

/// The subset of the 348-byte NIfTI-1 header this crate reads and writes.
/// Unlisted fields are written as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NiftiHeader {
    pub endian: Endian,
    pub dim: [i16; 8],
    pub datatype: i16,
    pub bitpix: i16,
    pub pixdim: [f32; 8],
    pub vox_offset: f32,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub xyzt_units: u8,
    pub descrip: String,
    pub qform_code: i16,
    pub sform_code: i16,
    pub quatern: [f32; 3],
    pub qoffset: [f32; 3],
    pub srow: [[f32; 4]; 3],
    pub magic: [u8; 4],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        NiftiHeader {
            endian: Endian::Little,
            dim: [3, 1, 1, 1, 1, 1, 1, 1],
            datatype: DataType::U8.code(),
            bitpix: 8,
            pixdim: [1.0; 8],
            vox_offset: MIN_VOX_OFFSET as f32,
            scl_slope: 1.0,
            scl_inter: 0.0,
            xyzt_units: 2,
            descrip: String::new(),
            qform_code: 0,
            sform_code: 0,
            quatern: [0.0; 3],
            qoffset: [0.0; 3],
            srow: [
                [1.0, 0.0, 0.0, 0.0],
                [0.0, 1.0, 0.0, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            magic: *b"n+1\0",
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Cursor<'_> {
    fn raw<const N: usize>(&self, offset: usize) -> [u8; N] {
        self.bytes[offset..offset + N]
            .try_into()
            .expect("slice length")
    }

    fn i16(&self, offset: usize) -> i16 {
        match self.endian {
            Endian::Little => i16::from_le_bytes(self.raw(offset)),
            Endian::Big => i16::from_be_bytes(self.raw(offset)),
        }
    }

    fn i32(&self, offset: usize) -> i32 {
        match self.endian {
            Endian::Little => i32::from_le_bytes(self.raw(offset)),
            Endian::Big => i32::from_be_bytes(self.raw(offset)),
        }
    }

    fn f32(&self, offset: usize) -> f32 {
        match self.endian {
            Endian::Little => f32::from_le_bytes(self.raw(offset)),
            Endian::Big => f32::from_be_bytes(self.raw(offset)),
        }
    }
}

struct Sink {
    bytes: Vec<u8>,
    endian: Endian,
}

impl Sink {
    fn put(&mut self, offset: usize, data: &[u8]) {
        self.bytes[offset..offset + data.len()].copy_from_slice(data);
    }

    fn i16(&mut self, offset: usize, v: i16) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(offset, &b);
    }

    fn i32(&mut self, offset: usize, v: i32) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(offset, &b);
    }

    fn f32(&mut self, offset: usize, v: f32) {
        let b = match self.endian {
            Endian::Little => v.to_le_bytes(),
            Endian::Big => v.to_be_bytes(),
        };
        self.put(offset, &b);
    }
}

impl NiftiHeader {
    /// Parses the first 348 bytes. Byte order is inferred from `dim[0]`.
    pub fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_SIZE {
            return Err(format!(
                "truncated header: {} of {HEADER_SIZE} bytes",
                bytes.len()
            ));
        }
        let endian = [Endian::Little, Endian::Big]
            .into_iter()
            .find(|&endian| (1..=7).contains(&Cursor { bytes, endian }.i16(40)))
            .ok_or("implausible dim[0]; not a NIfTI-1 header")?;
        let c = Cursor { bytes, endian };
        let sizeof_hdr = c.i32(0);
        if sizeof_hdr != HEADER_SIZE as i32 {
            return Err(format!("sizeof_hdr is {sizeof_hdr}, expected 348"));
        }
        let magic: [u8; 4] = c.raw(344);
        match &magic {
            b"n+1\0" => {}
            b"ni1\0" => return Err("paired NIfTI unsupported (magic ni1)".into()),
            _ => return Err(format!("bad magic {magic:?}; not NIfTI-1")),
        }
        let mut dim = [0i16; 8];
        for (i, d) in dim.iter_mut().enumerate() {
            *d = c.i16(40 + 2 * i);
        }
        let mut pixdim = [0f32; 8];
        for (i, p) in pixdim.iter_mut().enumerate() {
            *p = c.f32(76 + 4 * i);
        }
        let mut srow = [[0f32; 4]; 3];
        for (r, row) in srow.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = c.f32(280 + 16 * r + 4 * k);
            }
        }
        let descrip_raw = &bytes[148..228];
        let end = descrip_raw.iter().position(|&b| b == 0).unwrap_or(80);
        Ok(NiftiHeader {
            endian,
            dim,
            datatype: c.i16(70),
            bitpix: c.i16(72),
            pixdim,
            vox_offset: c.f32(108),
            scl_slope: c.f32(112),
            scl_inter: c.f32(116),
            xyzt_units: bytes[123],
            descrip: String::from_utf8_lossy(&descrip_raw[..end]).into_owned(),
            qform_code: c.i16(252),
            sform_code: c.i16(254),
            quatern: [c.f32(256), c.f32(260), c.f32(264)],
            qoffset: [c.f32(268), c.f32(272), c.f32(276)],
            srow,
            magic,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut s = Sink {
            bytes: vec![0u8; HEADER_SIZE],
            endian: self.endian,
        };
        s.i32(0, HEADER_SIZE as i32);
        for (i, &d) in self.dim.iter().enumerate() {
            s.i16(40 + 2 * i, d);
        }
        s.i16(70, self.datatype);
        s.i16(72, self.bitpix);
        for (i, &p) in self.pixdim.iter().enumerate() {
            s.f32(76 + 4 * i, p);
        }
        s.f32(108, self.vox_offset);
        s.f32(112, self.scl_slope);
        s.f32(116, self.scl_inter);
        s.bytes[123] = self.xyzt_units;
        let descrip = self.descrip.as_bytes();
        let n = descrip.len().min(79);
        s.put(148, &descrip[..n]);
        s.i16(252, self.qform_code);
        s.i16(254, self.sform_code);
        for k in 0..3 {
            s.f32(256 + 4 * k, self.quatern[k]);
            s.f32(268 + 4 * k, self.qoffset[k]);
        }
        for (r, row) in self.srow.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                s.f32(280 + 16 * r + 4 * k, v);
            }
        }
        s.put(344, &self.magic);
        s.bytes
    }

    /// Spatial dims after checking that any 4th dimension is singleton.
    pub fn spatial_dims(&self) -> std::result::Result<[usize; 3], String> {
        let ndim = self.dim[0];
        if !(3..=4).contains(&ndim) {
            return Err(format!("dim[0] = {ndim}; only 3D label maps are supported"));
        }
        if ndim == 4 && self.dim[4] != 1 {
            return Err(format!(
                "4D volume with {} frames; dims > 3 must be singleton",
                self.dim[4]
            ));
        }
        let mut dims = [0usize; 3];
        for (axis, d) in dims.iter_mut().enumerate() {
            let v = self.dim[axis + 1];
            if v <= 0 {
                return Err(format!("dim[{}] = {v} is not positive", axis + 1));
            }
            *d = v as usize;
        }
        Ok(dims)
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            (self.pixdim[1] as f64).abs(),
            (self.pixdim[2] as f64).abs(),
            (self.pixdim[3] as f64).abs(),
        ]
    }

    /// Voxel-to-world affine: sform when `sform_code > 0`, else qform when
    /// `qform_code > 0`, else the pixdim diagonal.
    pub fn affine(&self) -> Matrix4<f64> {
        if self.sform_code > 0 {
            let mut m = Matrix4::identity();
            for r in 0..3 {
                for k in 0..4 {
                    m[(r, k)] = self.srow[r][k] as f64;
                }
            }
            m
        } else if self.qform_code > 0 {
            self.qform_affine()
        } else {
            let [dx, dy, dz] = self.spacing();
            Matrix4::new_nonuniform_scaling(&nalgebra::Vector3::new(dx, dy, dz))
        }
    }

    fn qform_affine(&self) -> Matrix4<f64> {
        let [b, c, d] = self.quatern.map(|v| v as f64);
        let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
        let r = Matrix3::new(
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b),
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a + d * d - c * c - b * b,
        );
        let qfac = if self.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let [dx, dy, dz] = self.spacing();
        let scale = Matrix3::from_diagonal(&nalgebra::Vector3::new(dx, dy, qfac * dz));
        let linear = r * scale;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&linear);
        for k in 0..3 {
            m[(k, 3)] = self.qoffset[k] as f64;
        }
        m
    }

    /// Header describing `grid` stored as `datatype`, with matching sform and qform.
    pub fn for_grid(grid: &Grid, datatype: DataType) -> Self {
        let dims = grid.dims();
        let spacing = grid.spacing();
        let affine = grid.affine();
        let mut h = NiftiHeader {
            datatype: datatype.code(),
            bitpix: (datatype.byte_size() * 8) as i16,
            sform_code: 2,
            qform_code: 2,
            ..NiftiHeader::default()
        };
        for axis in 0..3 {
            h.dim[axis + 1] = dims[axis] as i16;
            h.pixdim[axis + 1] = spacing[axis] as f32;
        }
        for r in 0..3 {
            for k in 0..4 {
                h.srow[r][k] = affine[(r, k)] as f32;
            }
        }
        let (quatern, qfac) = rotation_to_quatern(affine, spacing);
        h.quatern = quatern;
        h.pixdim[0] = qfac;
        h.qoffset = [
            affine[(0, 3)] as f32,
            affine[(1, 3)] as f32,
            affine[(2, 3)] as f32,
        ];
        h
    }
}

/// Quaternion (b, c, d) and qfac of the rotation part of an affine.
fn rotation_to_quatern(affine: &Matrix4<f64>, spacing: [f64; 3]) -> ([f32; 3], f32) {
    let mut r: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
    for (axis, &s) in spacing.iter().enumerate() {
        let mut col = r.column_mut(axis);
        col /= s;
    }
    let mut qfac = 1.0;
    if r.determinant() < 0.0 {
        let mut col = r.column_mut(2);
        col *= -1.0;
        qfac = -1.0;
    }
    let rot = Rotation3::from_matrix_eps(&r, 1e-12, 100, Rotation3::identity());
    let q = UnitQuaternion::from_rotation_matrix(&rot);
    let (w, i, j, k) = (q.w, q.i, q.j, q.k);
    let sign = if w < 0.0 { -1.0 } else { 1.0 };
    (
        [(sign * i) as f32, (sign * j) as f32, (sign * k) as f32],
        qfac,
    )
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&GZIP_MAGIC) {
        let mut out = Vec::with_capacity(raw.len() * 4);
        MultiGzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::nifti(path, format!("gzip stream: {e}")))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads only the header of a (possibly gzipped) NIfTI-1 file.
pub fn read_header(path: impl AsRef<Path>) -> Result<NiftiHeader> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let mut reader = std::io::BufReader::new(file);
    let mut head = Vec::with_capacity(HEADER_SIZE);
    {
        use std::io::BufRead;
        let buf = reader.fill_buf().map_err(|e| Error::io(path, e))?;
        if buf.len() >= 2 {
            magic.copy_from_slice(&buf[..2]);
        }
    }
    let result = if magic == GZIP_MAGIC {
        MultiGzDecoder::new(reader)
            .take(HEADER_SIZE as u64)
            .read_to_end(&mut head)
    } else {
        reader.take(HEADER_SIZE as u64).read_to_end(&mut head)
    };
    result.map_err(|e| Error::nifti(path, format!("reading header: {e}")))?;
    NiftiHeader::parse(&head).map_err(|m| Error::nifti(path, m))
}

/// Grid of a NIfTI file, from its header alone.
pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let dims = header.spatial_dims().map_err(|m| Error::nifti(path, m))?;
    Grid::new(dims, header.spacing(), header.affine())
}

/// Reads a label map. Float data must hold integral values.
pub fn read_label_volume(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    decode_label_volume(&bytes).map_err(|m| Error::nifti(path, m))
}

/// Decodes an uncompressed `n+1` byte stream.
pub fn decode_label_volume(bytes: &[u8]) -> std::result::Result<LabelVolume, String> {
    let header = NiftiHeader::parse(bytes)?;
    let dims = header.spatial_dims()?;
    let datatype = DataType::from_code(header.datatype)
        .ok_or_else(|| format!("unsupported datatype code {}", header.datatype))?;
    let vox_offset = header.vox_offset;
    if !(vox_offset.is_finite() && vox_offset.fract() == 0.0) {
        return Err(format!("vox_offset {vox_offset} is not an integer"));
    }
    let offset = vox_offset as usize;
    if offset < MIN_VOX_OFFSET {
        return Err(format!("vox_offset {offset} below {MIN_VOX_OFFSET}"));
    }
    let count = dims[0] * dims[1] * dims[2];
    let size = count * datatype.byte_size();
    let end = offset + size;
    if bytes.len() < end {
        return Err(format!(
            "truncated data: need {end} bytes, file has {}",
            bytes.len()
        ));
    }
    let data = &bytes[offset..end];

    let slope = header.scl_slope as f64;
    let inter = header.scl_inter as f64;
    let scaled = slope != 0.0 && slope.is_finite() && !(slope == 1.0 && inter == 0.0);
    let float_data = matches!(datatype, DataType::F32 | DataType::F64);

    let labels: Vec<u32> = if scaled || float_data {
        let values = decode_f64(data, datatype, header.endian);
        let (slope, inter) = if scaled { (slope, inter) } else { (1.0, 0.0) };
        values
            .into_iter()
            .map(|v| float_to_label(v * slope + inter))
            .collect::<std::result::Result<_, _>>()?
    } else {
        decode_integers(data, datatype, header.endian)?
    };

    let spacing = header.spacing();
    let grid = Grid::new(dims, spacing, header.affine()).map_err(|e| e.to_string())?;
    LabelVolume::new(grid, labels).map_err(|e| e.to_string())
}

fn float_to_label(v: f64) -> std::result::Result<u32, String> {
    if !v.is_finite() {
        return Err(format!("non-finite label value {v}"));
    }
    let r = v.round();
    if (v - r).abs() > INTEGRALITY_TOLERANCE {
        return Err(format!("non-integral label value {v}"));
    }
    if r < 0.0 {
        return Err(format!("negative label {r}"));
    }
    if r > u32::MAX as f64 {
        return Err(format!("label {r} out of range"));
    }
    Ok(r as u32)
}

fn decode_integers(
    data: &[u8],
    datatype: DataType,
    endian: Endian,
) -> std::result::Result<Vec<u32>, String> {
    macro_rules! ints {
        ($t:ty, $n:expr) => {
            data.chunks_exact($n)
                .map(|c| {
                    let b: [u8; $n] = c.try_into().unwrap();
                    let v = match endian {
                        Endian::Little => <$t>::from_le_bytes(b),
                        Endian::Big => <$t>::from_be_bytes(b),
                    };
                    u32::try_from(v).map_err(|_| format!("negative label {v}"))
                })
                .collect()
        };
    }
    match datatype {
        DataType::U8 => Ok(data.iter().map(|&b| b as u32).collect()),
        DataType::I16 => ints!(i16, 2),
        DataType::U16 => ints!(u16, 2),
        DataType::I32 => ints!(i32, 4),
        DataType::F32 | DataType::F64 => unreachable!("float data goes through decode_f64"),
    }
}

fn decode_f64(data: &[u8], datatype: DataType, endian: Endian) -> Vec<f64> {
    macro_rules! nums {
        ($t:ty, $n:expr) => {
            data.chunks_exact($n)
                .map(|c| {
                    let b: [u8; $n] = c.try_into().unwrap();
                    (match endian {
                        Endian::Little => <$t>::from_le_bytes(b),
                        Endian::Big => <$t>::from_be_bytes(b),
                    }) as f64
                })
                .collect()
        };
    }
    match datatype {
        DataType::U8 => data.iter().map(|&b| b as f64).collect(),
        DataType::I16 => nums!(i16, 2),
        DataType::U16 => nums!(u16, 2),
        DataType::I32 => nums!(i32, 4),
        DataType::F32 => nums!(f32, 4),
        DataType::F64 => nums!(f64, 8),
    }
}

/// Encodes `volume` as an uncompressed little-endian `n+1` stream using the
/// smallest integer datatype that holds its labels.
pub fn encode_label_volume(volume: &LabelVolume) -> Result<Vec<u8>> {
    let max = volume.max_label();
    let datatype = DataType::for_max_label(max).ok_or_else(|| {
        Error::InvalidArgument(format!("label {max} does not fit a signed 32-bit integer"))
    })?;
    let header = NiftiHeader::for_grid(volume.grid(), datatype);
    let mut out = header.to_bytes();
    out.extend_from_slice(&[0u8; 4]);
    out.reserve(volume.labels().len() * datatype.byte_size());
    let labels = volume.labels();
    match datatype {
        DataType::U8 => out.extend(labels.iter().map(|&v| v as u8)),
        DataType::I16 => labels
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as i16).to_le_bytes())),
        DataType::I32 => labels
            .iter()
            .for_each(|&v| out.extend_from_slice(&(v as i32).to_le_bytes())),
        _ => unreachable!("the datatype ladder only yields integer types"),
    }
    Ok(out)
}

/// Writes `volume`; a `.gz` extension selects gzip compression.
pub fn write_label_volume(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_label_volume(volume)?;
    let gzip = path.extension().is_some_and(|e| e == "gz");
    let payload = if gzip {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, payload).map_err(|e| Error::io(path, e))
}
