//! NIfTI-1 single-file (.nii) reader and writer.
//!
//! Scope: uncompressed single-file volumes, 32-bit float payload (datatype
//! code 16), little-endian, sform affine (`srow_*`). 4D files carry the frame
//! count in `dim[4]`; frame mid-times travel in a sidecar JSON next to the
//! file: `{"frame_mid_times_min": [..]}`.

use super::{BinaryMask, DynamicSeries, Volume};
use crate::error::{Error, Result};
use nalgebra::Matrix4;
use ndarray::Array3;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const DT_FLOAT32: i16 = 16;
const MAGIC: [u8; 4] = *b"n+1\0";

struct HeaderFields {
    dim: [i16; 8],
    pixdim: [f32; 8],
    datatype: i16,
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    sform_code: i16,
    srow: [[f32; 4]; 3],

}

fn get_i16(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn get_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn get_f32(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

fn parse_header(path: &Path, bytes: &[u8]) -> Result<HeaderFields> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::nifti(
            path,
            format!("file is {} bytes, smaller than the 348-byte header", bytes.len()),
        ));
    }
    let sizeof_hdr = get_i32(bytes, 0);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let reason = if sizeof_hdr.swap_bytes() == HEADER_SIZE as i32 {
            "big-endian NIfTI is not supported".to_string()
        } else {
            format!("sizeof_hdr is {sizeof_hdr}, expected 348")
        };
        return Err(Error::nifti(path, reason));
    }
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::nifti(
            path,
            format!("magic is {:?}, expected \"n+1\\0\"", &magic),
        ));
    }
    let mut dim = [0i16; 8];
    let mut pixdim = [0f32; 8];
    for i in 0..8 {
        dim[i] = get_i16(bytes, 40 + 2 * i);
        pixdim[i] = get_f32(bytes, 76 + 4 * i);
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = get_f32(bytes, 280 + 16 * r + 4 * c);
        }
    }
    Ok(HeaderFields {
        dim,
        pixdim,
        datatype: get_i16(bytes, 70),
        vox_offset: get_f32(bytes, 108),
        scl_slope: get_f32(bytes, 112),
        scl_inter: get_f32(bytes, 116),
        sform_code: get_i16(bytes, 254),
        srow,
    })
}

fn header_geometry(path: &Path, h: &HeaderFields) -> Result<((usize, usize, usize), (f64, f64, f64), Matrix4<f64>)> {
    let (nw, nh, nd) = (h.dim[1] as i64, h.dim[2] as i64, h.dim[3] as i64);
    if nw < 1 || nh < 1 || nd < 1 {
        return Err(Error::nifti(path, format!("non-positive dim {:?}", &h.dim[..5])));
    }
    let shape = (nd as usize, nh as usize, nw as usize);

    let mut affine = Matrix4::identity();
    if h.sform_code > 0 {
        for r in 0..3 {
            for c in 0..4 {
                affine[(r, c)] = h.srow[r][c] as f64;
            }
        }
    } else {
        affine[(0, 0)] = h.pixdim[1] as f64;
        affine[(1, 1)] = h.pixdim[2] as f64;
        affine[(2, 2)] = h.pixdim[3] as f64;
    }

    let mut sp = [h.pixdim[1] as f64, h.pixdim[2] as f64, h.pixdim[3] as f64];
    for (a, s) in sp.iter_mut().enumerate() {
        if !(*s > 0.0) || !s.is_finite() {
            // Fall back to the affine column norm when pixdim is absent.
            let col = affine.fixed_view::<3, 1>(0, a);
            let n = col.norm();
            if n > 0.0 {
                *s = n;
            } else {
                return Err(Error::nifti(path, format!("pixdim[{}] is not positive", a + 1)));
            }
        }
    }
    Ok((shape, (sp[2], sp[1], sp[0]), affine))
}

fn read_payload(
    path: &Path,
    bytes: &[u8],
    h: &HeaderFields,
    n_values: usize,
) -> Result<Vec<f64>> {
    if h.datatype != DT_FLOAT32 {
        return Err(Error::NiftiDatatype {
            path: path.to_path_buf(),
            code: h.datatype,
        });
    }
    let off = h.vox_offset as usize;
    if off < HEADER_SIZE || bytes.len() < off + 4 * n_values {
        return Err(Error::nifti(
            path,
            format!(
                "payload truncated: need {} bytes at offset {}, file has {}",
                4 * n_values,
                off,
                bytes.len()
            ),
        ));
    }
    let slope = if h.scl_slope == 0.0 { 1.0 } else { h.scl_slope as f64 };
    let inter = h.scl_inter as f64;
    let rescale = slope != 1.0 || inter != 0.0;
    let mut out = Vec::with_capacity(n_values);
    for i in 0..n_values {
        let p = off + 4 * i;
        let x = f32::from_le_bytes([bytes[p], bytes[p + 1], bytes[p + 2], bytes[p + 3]]) as f64;
        out.push(if rescale { x * slope + inter } else { x });
    }
    Ok(out)
}

/// Reads a single 3D volume. A 4D payload is rejected with a pointer to
/// [`read_series`].
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(path, &bytes)?;
    let ndim = h.dim[0];
    let is_3d = ndim == 3 || (ndim == 4 && h.dim[4] <= 1);
    if !is_3d {
        if ndim == 4 {
            return Err(Error::NiftiNot3d {
                path: path.to_path_buf(),
                ndim: 4,
            });
        }
        return Err(Error::nifti(path, format!("unsupported dim[0] = {ndim}")));
    }
    let (shape, spacing, affine) = header_geometry(path, &h)?;
    let values = read_payload(path, &bytes, &h, shape.0 * shape.1 * shape.2)?;
    let data = Array3::from_shape_vec(shape, values)
        .map_err(|e| Error::nifti(path, format!("shape error: {e}")))?;
    Volume::new(data, spacing, affine)
}

/// Reads a 4D dynamic series plus its frame-time sidecar JSON.
pub fn read_series(path: impl AsRef<Path>) -> Result<DynamicSeries> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let h = parse_header(path, &bytes)?;
    if h.dim[0] != 4 {
        return Err(Error::nifti(
            path,
            format!("expected a 4D file, dim[0] = {}", h.dim[0]),
        ));
    }
    let nt = h.dim[4] as usize;
    if nt < 1 {
        return Err(Error::nifti(path, "dim[4] must be >= 1".to_string()));
    }
    let (shape, spacing, affine) = header_geometry(path, &h)?;
    let frame_len = shape.0 * shape.1 * shape.2;
    let values = read_payload(path, &bytes, &h, frame_len * nt)?;
    let mut frames = Vec::with_capacity(nt);
    for t in 0..nt {
        let chunk = values[t * frame_len..(t + 1) * frame_len].to_vec();
        let data = Array3::from_shape_vec(shape, chunk)
            .map_err(|e| Error::nifti(path, format!("shape error: {e}")))?;
        frames.push(Volume::new(data, spacing, affine)?);
    }
    let sidecar = sidecar_path(path);
    let raw = fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let times: FrameTimes = serde_json::from_str(&raw)
        .map_err(|e| Error::nifti(&sidecar, format!("bad sidecar JSON: {e}")))?;
    if times.frame_mid_times_min.len() != nt {
        return Err(Error::nifti(
            &sidecar,
            format!(
                "sidecar lists {} frame times for {} frames",
                times.frame_mid_times_min.len(),
                nt
            ),
        ));
    }
    DynamicSeries::new(frames, times.frame_mid_times_min)
}

#[derive(Serialize, Deserialize)]
struct FrameTimes {
    frame_mid_times_min: Vec<f64>,
}

/// Sidecar JSON path for a 4D file: same name with a `.json` extension.
pub fn sidecar_path(nii_path: &Path) -> PathBuf {
    nii_path.with_extension("json")
}

fn put_i16(b: &mut [u8], off: usize, v: i16) {
    b[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_i32(b: &mut [u8], off: usize, v: i32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(b: &mut [u8], off: usize, v: f32) {
    b[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn build_header(
    shape: (usize, usize, usize),
    n_frames: Option<usize>,
    spacing: (f64, f64, f64),
    affine: &Matrix4<f64>,
) -> Vec<u8> {
    let mut b = vec![0u8; VOX_OFFSET];
    put_i32(&mut b, 0, HEADER_SIZE as i32);
    b[39] = 0; // dim_info

    let ndim: i16 = if n_frames.is_some() { 4 } else { 3 };
    let dims: [i16; 8] = [
        ndim,
        shape.2 as i16,
        shape.1 as i16,
        shape.0 as i16,
        n_frames.unwrap_or(1) as i16,
        1,
        1,
        1,
    ];
    for (i, d) in dims.iter().enumerate() {
        put_i16(&mut b, 40 + 2 * i, *d);
    }
    put_i16(&mut b, 70, DT_FLOAT32);
    put_i16(&mut b, 72, 32); // bitpix

    let pixdims: [f32; 8] = [
        1.0,
        spacing.2 as f32,
        spacing.1 as f32,
        spacing.0 as f32,
        0.0,
        0.0,
        0.0,
        0.0,
    ];
    for (i, p) in pixdims.iter().enumerate() {
        put_f32(&mut b, 76 + 4 * i, *p);
    }
    put_f32(&mut b, 108, VOX_OFFSET as f32);
    put_f32(&mut b, 112, 1.0); // scl_slope
    put_f32(&mut b, 116, 0.0); // scl_inter
    b[123] = if n_frames.is_some() { 10 } else { 2 }; // mm | sec

    put_i16(&mut b, 252, 0); // qform_code
    put_i16(&mut b, 254, 1); // sform_code: aligned
    for r in 0..3 {
        for c in 0..4 {
            put_f32(&mut b, 280 + 16 * r + 4 * c, affine[(r, c)] as f32);
        }
    }
    b[344..348].copy_from_slice(&MAGIC);
    // Bytes 348..352 stay zero: no header extensions.
    b
}

fn write_file(path: &Path, header: &[u8], values: impl Iterator<Item = f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    w.write_all(header).map_err(|e| Error::io(path, e))?;
    for x in values {
        w.write_all(&(x as f32).to_le_bytes())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a volume as an uncompressed NIfTI-1 `.nii` with a float32 payload.
pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = build_header(v.shape(), None, v.spacing, &v.affine);
    write_file(path, &header, v.data.iter().copied())
}

/// Writes a mask as a 0/1 float32 NIfTI volume.
pub fn write_mask(m: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_volume(&m.to_volume(), path)
}

/// Reads a mask persisted as a 0/1 volume (values >= 0.5 are true).
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    Ok(BinaryMask::from_volume(&read_volume(path)?))
}

/// Writes a dynamic series as a 4D `.nii` plus the frame-time sidecar.
pub fn write_series(s: &DynamicSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let first = &s.frames[0];
    let header = build_header(
        first.shape(),
        Some(s.frames.len()),
        first.spacing,
        &first.affine,
    );
    write_file(
        path,
        &header,
        s.frames.iter().flat_map(|f| f.data.iter().copied()),
    )?;
    let sidecar = sidecar_path(path);
    let times = FrameTimes {
        frame_mid_times_min: s.frame_mid_times_min.clone(),
    };
    let json = serde_json::to_string_pretty(&times).expect("serializable");
    fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
}
