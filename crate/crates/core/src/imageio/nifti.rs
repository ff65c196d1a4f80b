//! Single-file, uncompressed NIfTI-1 (`.nii`) reader and writer.
//!
//! The header stores grid metadata as `f32`. When the `f64` grid does not
//! survive that narrowing, the writer appends one header extension holding
//! the exact `f64` spacing, origin and direction so a read reproduces the
//! written volume bit for bit. Readers that do not know the extension still
//! see a valid file with `f32`-rounded geometry.

use std::fs;
use std::path::Path;

use byteorder::{BigEndian, ByteOrder as _, LittleEndian};

use super::{det3, Grid, ImageVolume, Mat3, RoiMask, Vec3, IDENTITY3};
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const MAGIC: &[u8; 4] = b"n+1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Extension code used for the exact-geometry block.
const GEOMETRY_ECODE: i32 = 0x5252;
const GEOMETRY_TAG: &[u8; 8] = b"RRGEOM01";
const GEOMETRY_PAYLOAD: usize = 8 + 15 * 8;

// Header field offsets.
const OFF_DIM: usize = 40;
const OFF_DATATYPE: usize = 70;
const OFF_BITPIX: usize = 72;
const OFF_PIXDIM: usize = 76;
const OFF_VOX_OFFSET: usize = 108;
const OFF_SCL_SLOPE: usize = 112;
const OFF_SCL_INTER: usize = 116;
const OFF_XYZT_UNITS: usize = 123;
const OFF_DESCRIP: usize = 148;
const OFF_QFORM_CODE: usize = 252;
const OFF_SFORM_CODE: usize = 254;
const OFF_QUATERN: usize = 256;
const OFF_QOFFSET: usize = 268;
const OFF_SROW: usize = 280;
const OFF_MAGIC: usize = 344;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ByteOrder {
    #[default]
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NiftiDatatype {
    U8,
    I16,
    F32,
    F64,
}

impl NiftiDatatype {
    fn code(self) -> i16 {
        match self {
            NiftiDatatype::U8 => 2,
            NiftiDatatype::I16 => 4,
            NiftiDatatype::F32 => 16,
            NiftiDatatype::F64 => 64,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        Some(match code {
            2 => NiftiDatatype::U8,
            4 => NiftiDatatype::I16,
            16 => NiftiDatatype::F32,
            64 => NiftiDatatype::F64,
            _ => return None,
        })
    }

    fn bytes(self) -> usize {
        match self {
            NiftiDatatype::U8 => 1,
            NiftiDatatype::I16 => 2,
            NiftiDatatype::F32 => 4,
            NiftiDatatype::F64 => 8,
        }
    }
}

#[derive(Clone, Copy)]
struct Codec(ByteOrder);

impl Codec {
    fn i16(self, b: &[u8], off: usize) -> i16 {
        match self.0 {
            ByteOrder::Little => LittleEndian::read_i16(&b[off..]),
            ByteOrder::Big => BigEndian::read_i16(&b[off..]),
        }
    }
    fn i32(self, b: &[u8], off: usize) -> i32 {
        match self.0 {
            ByteOrder::Little => LittleEndian::read_i32(&b[off..]),
            ByteOrder::Big => BigEndian::read_i32(&b[off..]),
        }
    }
    fn f32(self, b: &[u8], off: usize) -> f32 {
        match self.0 {
            ByteOrder::Little => LittleEndian::read_f32(&b[off..]),
            ByteOrder::Big => BigEndian::read_f32(&b[off..]),
        }
    }
    fn f64(self, b: &[u8], off: usize) -> f64 {
        match self.0 {
            ByteOrder::Little => LittleEndian::read_f64(&b[off..]),
            ByteOrder::Big => BigEndian::read_f64(&b[off..]),
        }
    }
    fn put_i16(self, b: &mut [u8], off: usize, v: i16) {
        match self.0 {
            ByteOrder::Little => LittleEndian::write_i16(&mut b[off..], v),
            ByteOrder::Big => BigEndian::write_i16(&mut b[off..], v),
        }
    }
    fn put_i32(self, b: &mut [u8], off: usize, v: i32) {
        match self.0 {
            ByteOrder::Little => LittleEndian::write_i32(&mut b[off..], v),
            ByteOrder::Big => BigEndian::write_i32(&mut b[off..], v),
        }
    }
    fn put_f32(self, b: &mut [u8], off: usize, v: f32) {
        match self.0 {
            ByteOrder::Little => LittleEndian::write_f32(&mut b[off..], v),
            ByteOrder::Big => BigEndian::write_f32(&mut b[off..], v),
        }
    }
    fn put_f64(self, b: &mut [u8], off: usize, v: f64) {
        match self.0 {
            ByteOrder::Little => LittleEndian::write_f64(&mut b[off..], v),
            ByteOrder::Big => BigEndian::write_f64(&mut b[off..], v),
        }
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<ImageVolume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_nifti_bytes(&bytes)
}

/// Parses an in-memory `.nii` file.
pub fn read_nifti_bytes(bytes: &[u8]) -> Result<ImageVolume> {
    let (grid, voxels) = decode(bytes)?;
    ImageVolume::new(grid, voxels)
}

/// Reads an integer label file; every voxel must hold a non-negative integer.
pub fn read_nifti_mask(path: impl AsRef<Path>) -> Result<RoiMask> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (grid, values) = decode(&bytes)?;
    let labels = values
        .iter()
        .map(|&v| {
            if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                Ok(v as u32)
            } else {
                Err(Error::invalid("mask", format!("non-integer or negative label {v}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    RoiMask::new(grid, labels)
}

pub fn write_nifti(volume: &ImageVolume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti_with_order(volume, path, ByteOrder::Little)
}

pub fn write_nifti_with_order(volume: &ImageVolume, path: impl AsRef<Path>, order: ByteOrder) -> Result<()> {
    volume.validate()?;
    let bytes = encode(&volume.grid, NiftiDatatype::F64, order, |codec, buf, off| {
        for (i, &v) in volume.voxels.iter().enumerate() {
            codec.put_f64(buf, off + 8 * i, v);
        }
    });
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes labels as unsigned 8-bit when they fit, signed 16-bit otherwise.
pub fn write_nifti_mask(mask: &RoiMask, path: impl AsRef<Path>) -> Result<()> {
    mask.validate()?;
    let max = mask.labels.iter().copied().max().unwrap_or(0);
    let dtype = if max <= u8::MAX as u32 {
        NiftiDatatype::U8
    } else if max <= i16::MAX as u32 {
        NiftiDatatype::I16
    } else {
        return Err(Error::invalid("mask", format!("label {max} does not fit a 16-bit file")));
    };
    let bytes = encode(&mask.grid, dtype, ByteOrder::Little, |codec, buf, off| {
        for (i, &l) in mask.labels.iter().enumerate() {
            match dtype {
                NiftiDatatype::U8 => buf[off + i] = l as u8,
                _ => codec.put_i16(buf, off + 2 * i, l as i16),
            }
        }
    });
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn encode(
    grid: &Grid,
    dtype: NiftiDatatype,
    order: ByteOrder,
    fill: impl FnOnce(Codec, &mut [u8], usize),
) -> Vec<u8> {
    let codec = Codec(order);
    let mut header = [0u8; HEADER_SIZE];
    codec.put_i32(&mut header, 0, HEADER_SIZE as i32);
    header[38] = b'r';
    let dims = [3, grid.dims[0] as i16, grid.dims[1] as i16, grid.dims[2] as i16, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        codec.put_i16(&mut header, OFF_DIM + 2 * i, *d);
    }
    codec.put_i16(&mut header, OFF_DATATYPE, dtype.code());
    codec.put_i16(&mut header, OFF_BITPIX, 8 * dtype.bytes() as i16);

    // A left-handed direction matrix is stored as a proper rotation plus qfac = -1.
    let mut rot = grid.direction;
    let qfac = if det3(&rot) < 0.0 {
        for row in rot.iter_mut() {
            row[2] = -row[2];
        }
        -1.0
    } else {
        1.0
    };
    let pixdim = [qfac, grid.spacing[0], grid.spacing[1], grid.spacing[2], 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        codec.put_f32(&mut header, OFF_PIXDIM + 4 * i, *p as f32);
    }
    codec.put_f32(&mut header, OFF_SCL_SLOPE, 1.0);
    codec.put_f32(&mut header, OFF_SCL_INTER, 0.0);
    header[OFF_XYZT_UNITS] = 2; // mm
    let descrip = b"radrobust";
    header[OFF_DESCRIP..OFF_DESCRIP + descrip.len()].copy_from_slice(descrip);

    codec.put_i16(&mut header, OFF_QFORM_CODE, 1);
    codec.put_i16(&mut header, OFF_SFORM_CODE, 1);
    let [_, b, c, d] = rotation_to_quaternion(&rot);
    for (i, q) in [b, c, d].iter().enumerate() {
        codec.put_f32(&mut header, OFF_QUATERN + 4 * i, *q as f32);
    }
    for a in 0..3 {
        codec.put_f32(&mut header, OFF_QOFFSET + 4 * a, grid.origin[a] as f32);
    }
    for r in 0..3 {
        for c in 0..3 {
            let v = grid.direction[r][c] * grid.spacing[c];
            codec.put_f32(&mut header, OFF_SROW + 16 * r + 4 * c, v as f32);
        }
        codec.put_f32(&mut header, OFF_SROW + 16 * r + 12, grid.origin[r] as f32);
    }
    header[OFF_MAGIC..OFF_MAGIC + 4].copy_from_slice(MAGIC);

    let exact = decode_geometry(codec, &header)
        .map(|(s, o, d)| bits_eq(&s, &grid.spacing) && bits_eq(&o, &grid.origin) && mat_bits_eq(&d, &grid.direction))
        .unwrap_or(false);
    let ext_len = if exact { 0 } else { (8 + GEOMETRY_PAYLOAD).div_ceil(16) * 16 };
    let vox_offset = HEADER_SIZE + 4 + ext_len;
    codec.put_f32(&mut header, OFF_VOX_OFFSET, vox_offset as f32);

    let mut out = vec![0u8; vox_offset + grid.len() * dtype.bytes()];
    out[..HEADER_SIZE].copy_from_slice(&header);
    if ext_len > 0 {
        out[HEADER_SIZE] = 1;
        let e = HEADER_SIZE + 4;
        codec.put_i32(&mut out, e, ext_len as i32);
        codec.put_i32(&mut out, e + 4, GEOMETRY_ECODE);
        out[e + 8..e + 16].copy_from_slice(GEOMETRY_TAG);
        let vals = grid.spacing.iter().chain(grid.origin.iter()).chain(grid.direction.iter().flatten());
        for (i, v) in vals.enumerate() {
            codec.put_f64(&mut out, e + 16 + 8 * i, *v);
        }
    }
    fill(codec, &mut out, vox_offset);
    out
}

fn decode(bytes: &[u8]) -> Result<(Grid, Vec<f64>)> {
    if bytes.len() >= 2 && bytes[..2] == GZIP_MAGIC {
        return Err(Error::UnsupportedFormat("gzip-compressed NIfTI is not supported; decompress to .nii".into()));
    }
    if bytes.len() < HEADER_SIZE + 4 {
        return Err(Error::CorruptHeader(format!("file is {} bytes, shorter than a NIfTI-1 header", bytes.len())));
    }
    if &bytes[OFF_MAGIC..OFF_MAGIC + 4] != MAGIC {
        return Err(Error::UnsupportedFormat(format!(
            "magic {:?} is not single-file NIfTI-1 \"n+1\"",
            String::from_utf8_lossy(&bytes[OFF_MAGIC..OFF_MAGIC + 3])
        )));
    }
    let codec = if LittleEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        Codec(ByteOrder::Little)
    } else if BigEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        Codec(ByteOrder::Big)
    } else {
        return Err(Error::CorruptHeader("sizeof_hdr is not 348 in either byte order".into()));
    };

    let ndim = codec.i16(bytes, OFF_DIM);
    if !(3..=4).contains(&ndim) {
        return Err(Error::CorruptHeader(format!("dim[0] = {ndim}, expected 3 or 4")));
    }
    let mut dims = [0usize; 3];
    for (a, d) in dims.iter_mut().enumerate() {
        let v = codec.i16(bytes, OFF_DIM + 2 * (a + 1));
        if v <= 0 {
            return Err(Error::CorruptHeader(format!("dim[{}] = {v} is not positive", a + 1)));
        }
        *d = v as usize;
    }
    if ndim == 4 && codec.i16(bytes, OFF_DIM + 8) <= 0 {
        return Err(Error::CorruptHeader("dim[4] is not positive".into()));
    }
    let code = codec.i16(bytes, OFF_DATATYPE);
    let dtype = NiftiDatatype::from_code(code)
        .ok_or_else(|| Error::UnsupportedFormat(format!("datatype code {code} (supported: uint8, int16, float32, float64)")))?;

    let (mut spacing, mut origin, mut direction) = decode_geometry(codec, bytes)?;
    if let Some((s, o, d)) = decode_extension(codec, bytes) {
        // Only trust the exact block while it still agrees with the header fields.
        if (0..3).all(|a| (s[a] as f32).abs() == spacing[a] as f32) {
            spacing = s;
            origin = o;
            direction = d;
        }
    }

    let vox_offset = codec.f32(bytes, OFF_VOX_OFFSET);
    if !(vox_offset >= (HEADER_SIZE + 4) as f32) || vox_offset.fract() != 0.0 {
        return Err(Error::CorruptHeader(format!("vox_offset {vox_offset} is invalid")));
    }
    let start = vox_offset as usize;
    let n = dims[0] * dims[1] * dims[2];
    let end = start + n * dtype.bytes();
    if bytes.len() < end {
        return Err(Error::CorruptHeader(format!("data truncated: need {end} bytes, file has {}", bytes.len())));
    }

    let slope = codec.f32(bytes, OFF_SCL_SLOPE) as f64;
    let inter = codec.f32(bytes, OFF_SCL_INTER) as f64;
    let scaled = slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope, inter) != (1.0, 0.0);
    let data = &bytes[start..end];
    let voxels = (0..n)
        .map(|i| {
            let raw = match dtype {
                NiftiDatatype::U8 => data[i] as f64,
                NiftiDatatype::I16 => codec.i16(data, 2 * i) as f64,
                NiftiDatatype::F32 => codec.f32(data, 4 * i) as f64,
                NiftiDatatype::F64 => codec.f64(data, 8 * i),
            };
            if scaled { raw * slope + inter } else { raw }
        })
        .collect();

    Ok((Grid { dims, spacing, origin, direction }, voxels))
}

/// Spacing, origin and direction as recoverable from the fixed header fields.
fn decode_geometry(codec: Codec, h: &[u8]) -> Result<(Vec3, Vec3, Mat3)> {
    let mut spacing = [0.0; 3];
    for (a, s) in spacing.iter_mut().enumerate() {
        let v = (codec.f32(h, OFF_PIXDIM + 4 * (a + 1)) as f64).abs();
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::CorruptHeader(format!("pixdim[{}] = {v} is not a positive spacing", a + 1)));
        }
        *s = v;
    }
    let sform = codec.i16(h, OFF_SFORM_CODE);
    let qform = codec.i16(h, OFF_QFORM_CODE);
    if sform > 0 {
        let mut dir = [[0.0; 3]; 3];
        let mut origin = [0.0; 3];
        for r in 0..3 {
            for (c, d) in dir[r].iter_mut().enumerate() {
                *d = codec.f32(h, OFF_SROW + 16 * r + 4 * c) as f64;
            }
            origin[r] = codec.f32(h, OFF_SROW + 16 * r + 12) as f64;
        }
        for c in 0..3 {
            let norm = (0..3).map(|r| dir[r][c] * dir[r][c]).sum::<f64>().sqrt();
            if !(norm > 0.0) {
                return Err(Error::CorruptHeader("sform has a zero column".into()));
            }
            for row in dir.iter_mut() {
                row[c] /= norm;
            }
        }
        Ok((spacing, origin, dir))
    } else if qform > 0 {
        let q = [0, 1, 2].map(|i| codec.f32(h, OFF_QUATERN + 4 * i) as f64);
        let mut dir = quaternion_to_rotation(q);
        if codec.f32(h, OFF_PIXDIM) < 0.0 {
            for row in dir.iter_mut() {
                row[2] = -row[2];
            }
        }
        let origin = [0, 1, 2].map(|i| codec.f32(h, OFF_QOFFSET + 4 * i) as f64);
        Ok((spacing, origin, dir))
    } else {
        Ok((spacing, [0.0; 3], IDENTITY3))
    }
}

fn decode_extension(codec: Codec, bytes: &[u8]) -> Option<(Vec3, Vec3, Mat3)> {
    if bytes[HEADER_SIZE] == 0 {
        return None;
    }
    let vox_offset = codec.f32(bytes, OFF_VOX_OFFSET) as usize;
    let mut pos = HEADER_SIZE + 4;
    while pos + 8 <= vox_offset.min(bytes.len()) {
        let esize = codec.i32(bytes, pos);
        let ecode = codec.i32(bytes, pos + 4);
        if esize < 16 || esize % 16 != 0 || pos + esize as usize > bytes.len() {
            return None;
        }
        if ecode == GEOMETRY_ECODE
            && esize as usize >= 8 + GEOMETRY_PAYLOAD
            && &bytes[pos + 8..pos + 16] == GEOMETRY_TAG
        {
            let v: Vec<f64> = (0..15).map(|i| codec.f64(bytes, pos + 16 + 8 * i)).collect();
            let dir = [[v[6], v[7], v[8]], [v[9], v[10], v[11]], [v[12], v[13], v[14]]];
            return Some(([v[0], v[1], v[2]], [v[3], v[4], v[5]], dir));
        }
        pos += esize as usize;
    }
    None
}

/// `[a, b, c, d]` with `a >= 0` for a proper rotation.
fn rotation_to_quaternion(m: &Mat3) -> [f64; 4] {
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > 0.0 {
        let s = 2.0 * (1.0 + tr).sqrt();
        [0.25 * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
        [(m[2][1] - m[1][2]) / s, 0.25 * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = 2.0 * (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt();
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, 0.25 * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = 2.0 * (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt();
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, 0.25 * s]
    };
    if q[0] < 0.0 { q.map(|v| -v) } else { q }
}

fn quaternion_to_rotation([b, c, d]: [f64; 3]) -> Mat3 {
    let a = (1.0 - (b * b + c * c + d * d)).max(0.0).sqrt();
    [
        [a * a + b * b - c * c - d * d, 2.0 * (b * c - a * d), 2.0 * (b * d + a * c)],
        [2.0 * (b * c + a * d), a * a + c * c - b * b - d * d, 2.0 * (c * d - a * b)],
        [2.0 * (b * d - a * c), 2.0 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ]
}

fn bits_eq(a: &Vec3, b: &Vec3) -> bool {
    a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn mat_bits_eq(a: &Mat3, b: &Mat3) -> bool {
    a.iter().zip(b).all(|(x, y)| bits_eq(x, y))
}
