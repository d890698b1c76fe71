//! Volumetric data types, geometry and file I/O shared by the whole pipeline.
//!
//! A [`Volume`] is a dense 3D scalar grid with physical spacing and a
//! voxel-to-world affine. Arrays are indexed `[d][h][w]` with `w` the
//! fastest-varying axis; the affine follows the NIfTI convention and maps
//! `(w, h, d, 1)` voxel indices to RAS world millimeters.

mod nifti;

pub use nifti::{
    read_mask, read_series, read_volume, sidecar_path, write_mask, write_series, write_volume,
};

use crate::error::{Error, Result};
use chrono::NaiveDate;
use nalgebra::{Matrix3, Matrix4, Vector4};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

/// Grid shape, physical spacing and voxel-to-world affine.
///
/// `shape` is `(D, H, W)` voxels and `spacing` is `(sd, sh, sw)` millimeters
/// per voxel. The affine maps homogeneous `(w, h, d, 1)` voxel coordinates to
/// world RAS coordinates, so `spacing` and the affine scale factors agree on
/// construction through [`Geometry::axis_aligned`].
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub shape: (usize, usize, usize),
    pub spacing: (f64, f64, f64),
    pub affine: Matrix4<f64>,
}

impl Geometry {
    /// Axis-aligned geometry with the given spacing and a zero world origin.
    pub fn axis_aligned(shape: (usize, usize, usize), spacing: (f64, f64, f64)) -> Self {
        let mut affine = Matrix4::identity();
        affine[(0, 0)] = spacing.2;
        affine[(1, 1)] = spacing.1;
        affine[(2, 2)] = spacing.0;
        Geometry {
            shape,
            spacing,
            affine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (d, h, w) = self.shape;
        if d < 1 || h < 1 || w < 1 {
            return Err(Error::InvalidVolume(format!(
                "shape components must be >= 1, got {:?}",
                self.shape
            )));
        }
        let (sd, sh, sw) = self.spacing;
        if !(sd > 0.0 && sh > 0.0 && sw > 0.0)
            || !sd.is_finite()
            || !sh.is_finite()
            || !sw.is_finite()
        {
            return Err(Error::InvalidVolume(format!(
                "spacing components must be positive and finite, got {:?}",
                self.spacing
            )));
        }
        let rot: Matrix3<f64> = self.affine.fixed_view::<3, 3>(0, 0).into();
        if rot.determinant().abs() < 1e-12 {
            return Err(Error::SingularAffine);
        }
        Ok(())
    }

    pub fn n_voxels(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    /// World coordinates of the voxel center at index `(d, h, w)`.
    pub fn voxel_to_world(&self, d: f64, h: f64, w: f64) -> [f64; 3] {
        let p = self.affine * Vector4::new(w, h, d, 1.0);
        [p[0], p[1], p[2]]
    }

    /// World coordinates of the grid center.
    pub fn center_world(&self) -> [f64; 3] {
        let (d, h, w) = self.shape;
        self.voxel_to_world(
            (d as f64 - 1.0) / 2.0,
            (h as f64 - 1.0) / 2.0,
            (w as f64 - 1.0) / 2.0,
        )
    }
}

/// Dense 3D scalar grid with physical geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    /// Intensities, shape `(D, H, W)`, `w` fastest in memory.
    pub data: Array3<f64>,
    /// Millimeters per voxel as `(sd, sh, sw)`.
    pub spacing: (f64, f64, f64),
    /// Voxel-to-world transform over `(w, h, d, 1)` indices, RAS world.
    pub affine: Matrix4<f64>,
}

impl Volume {
    pub fn new(data: Array3<f64>, spacing: (f64, f64, f64), affine: Matrix4<f64>) -> Result<Self> {
        let v = Volume {
            data,
            spacing,
            affine,
        };
        v.geometry().validate()?;
        if !v.data.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidVolume(
                "intensities must all be finite".into(),
            ));
        }
        Ok(v)
    }

    /// Zero-filled volume over a geometry.
    pub fn zeros(geom: &Geometry) -> Self {
        Volume {
            data: Array3::zeros(geom.shape),
            spacing: geom.spacing,
            affine: geom.affine,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            shape: self.shape(),
            spacing: self.spacing,
            affine: self.affine,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    /// Replaces the intensity array, keeping the geometry.
    pub fn with_data(&self, data: Array3<f64>) -> Self {
        debug_assert_eq!(data.shape(), self.data.shape());
        Volume {
            data,
            spacing: self.spacing,
            affine: self.affine,
        }
    }

    pub fn same_geometry(&self, other: &Geometry) -> bool {
        self.shape() == other.shape && self.spacing == other.spacing && self.affine == other.affine
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &x in self.data.iter() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        (lo, hi)
    }
}

/// Voxelwise boolean grid sharing a [`Volume`]'s geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub data: Array3<bool>,
    pub spacing: (f64, f64, f64),
    pub affine: Matrix4<f64>,
}

impl BinaryMask {
    pub fn new(data: Array3<bool>, spacing: (f64, f64, f64), affine: Matrix4<f64>) -> Result<Self> {
        let m = BinaryMask {
            data,
            spacing,
            affine,
        };
        m.geometry().validate()?;
        Ok(m)
    }

    pub fn empty(geom: &Geometry) -> Self {
        BinaryMask {
            data: Array3::from_elem(geom.shape, false),
            spacing: geom.spacing,
            affine: geom.affine,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            shape: self.shape(),
            spacing: self.spacing,
            affine: self.affine,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2])
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn same_geometry(&self, other: &Geometry) -> bool {
        self.shape() == other.shape && self.spacing == other.spacing && self.affine == other.affine
    }

    /// Mask as a 0/1 volume (the persisted representation).
    pub fn to_volume(&self) -> Volume {
        Volume {
            data: self.data.mapv(|b| if b { 1.0 } else { 0.0 }),
            spacing: self.spacing,
            affine: self.affine,
        }
    }

    /// Interprets a volume as a mask: value >= 0.5 is true.
    pub fn from_volume(v: &Volume) -> Self {
        BinaryMask {
            data: v.data.mapv(|x| x >= 0.5),
            spacing: v.spacing,
            affine: v.affine,
        }
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data
            .iter()
            .zip(other.data.iter())
            .all(|(&a, &b)| !a || b)
    }
}

/// Ordered PET frames sharing one geometry, with mid-frame times in minutes.
#[derive(Debug, Clone)]
pub struct DynamicSeries {
    pub frames: Vec<Volume>,
    pub frame_mid_times_min: Vec<f64>,
}

impl DynamicSeries {
    pub fn new(frames: Vec<Volume>, frame_mid_times_min: Vec<f64>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidVolume("series needs at least one frame".into()));
        }
        if frames.len() != frame_mid_times_min.len() {
            return Err(Error::InvalidVolume(format!(
                "{} frames but {} frame times",
                frames.len(),
                frame_mid_times_min.len()
            )));
        }
        let geom = frames[0].geometry();
        for (i, f) in frames.iter().enumerate() {
            if !f.same_geometry(&geom) {
                return Err(Error::GeometryMismatch(format!(
                    "frame {i} geometry differs from frame 0"
                )));
            }
        }
        if !frame_mid_times_min.windows(2).all(|t| t[0] < t[1]) {
            return Err(Error::InvalidVolume(
                "frame mid-times must be strictly increasing".into(),
            ));
        }
        Ok(DynamicSeries {
            frames,
            frame_mid_times_min,
        })
    }
}

/// Tracer analog of a case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tracer {
    FmisoLike,
    FdgLike,
}

/// MRI channel identifiers, in the fixed input order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MriChannel {
    T1,
    T1Gd,
    T2,
    Flair,
}

impl MriChannel {
    pub const ALL: [MriChannel; 4] = [
        MriChannel::T1,
        MriChannel::T1Gd,
        MriChannel::T2,
        MriChannel::Flair,
    ];

    pub fn index(self) -> usize {
        match self {
            MriChannel::T1 => 0,
            MriChannel::T1Gd => 1,
            MriChannel::T2 => 2,
            MriChannel::Flair => 3,
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            MriChannel::T1 => "t1",
            MriChannel::T1Gd => "t1gd",
            MriChannel::T2 => "t2",
            MriChannel::Flair => "flair",
        }
    }
}

/// One training sample: 4 MRI channels, PET target, masks and metadata.
///
/// Channel order is fixed as `[T1, T1Gd, T2, FLAIR]`.
#[derive(Debug, Clone)]
pub struct CasePair {
    pub mri: [Volume; 4],
    pub pet: Volume,
    pub brain_mask: BinaryMask,
    pub tumor_mask: BinaryMask,
    pub patient_id: String,
    pub mri_date: NaiveDate,
    pub pet_date: NaiveDate,
    pub tracer: Tracer,
}

impl CasePair {
    /// Validates the cross-member invariants: identical geometry everywhere
    /// and `tumor_mask` contained in `brain_mask`.
    pub fn validate(&self) -> Result<()> {
        let geom = self.pet.geometry();
        geom.validate()?;
        for (i, m) in self.mri.iter().enumerate() {
            if !m.same_geometry(&geom) {
                return Err(Error::GeometryMismatch(format!(
                    "MRI channel {i} geometry differs from PET"
                )));
            }
        }
        if !self.brain_mask.same_geometry(&geom) || !self.tumor_mask.same_geometry(&geom) {
            return Err(Error::GeometryMismatch(
                "mask geometry differs from PET".into(),
            ));
        }
        if !self.tumor_mask.is_subset_of(&self.brain_mask) {
            return Err(Error::InvalidVolume(
                "tumor_mask must be a subset of brain_mask".into(),
            ));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.pet.geometry()
    }

    /// Absolute MRI-to-PET acquisition gap in days.
    pub fn date_gap_days(&self) -> i64 {
        (self.mri_date - self.pet_date).num_days().abs()
    }
}

/// Inclusive axis-aligned voxel box `[min_d..=max_d] x [min_h..=max_h] x [min_w..=max_w]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelBox {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl VoxelBox {
    pub fn shape(&self) -> (usize, usize, usize) {
        (
            self.max[0] - self.min[0] + 1,
            self.max[1] - self.min[1] + 1,
            self.max[2] - self.min[2] + 1,
        )
    }

    pub fn contains(&self, idx: [usize; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= idx[a] && idx[a] <= self.max[a])
    }

    fn check_within(&self, shape: (usize, usize, usize)) -> Result<()> {
        let dims = [shape.0, shape.1, shape.2];
        for a in 0..3 {
            if self.min[a] > self.max[a] || self.max[a] >= dims[a] {
                return Err(Error::BoxOutOfRange(format!("{self:?} in grid {shape:?}")));
            }
        }
        Ok(())
    }
}

/// Tightest box containing all true voxels, expanded by `margin_voxels` and
/// clipped to the grid.
pub fn bbox_of_mask(m: &BinaryMask, margin_voxels: usize) -> Result<VoxelBox> {
    let (dd, hh, ww) = m.shape();
    let mut min = [usize::MAX; 3];
    let mut max = [0usize; 3];
    let mut any = false;
    for ((d, h, w), &b) in m.data.indexed_iter() {
        if b {
            any = true;
            let idx = [d, h, w];
            for a in 0..3 {
                min[a] = min[a].min(idx[a]);
                max[a] = max[a].max(idx[a]);
            }
        }
    }
    if !any {
        return Err(Error::EmptyMask);
    }
    let dims = [dd, hh, ww];
    for a in 0..3 {
        min[a] = min[a].saturating_sub(margin_voxels);
        max[a] = (max[a] + margin_voxels).min(dims[a] - 1);
    }
    Ok(VoxelBox { min, max })
}

fn cropped_affine(affine: &Matrix4<f64>, min: [usize; 3]) -> Matrix4<f64> {
    // New voxel (0,0,0) sits at the old box minimum; axes are unchanged.
    let mut t = Matrix4::identity();
    t[(0, 3)] = min[2] as f64;
    t[(1, 3)] = min[1] as f64;
    t[(2, 3)] = min[0] as f64;
    affine * t
}

/// Sub-volume over an in-range box, with the affine translation adjusted.
pub fn crop(v: &Volume, b: &VoxelBox) -> Result<Volume> {
    b.check_within(v.shape())?;
    let data = v
        .data
        .slice(ndarray::s![
            b.min[0]..=b.max[0],
            b.min[1]..=b.max[1],
            b.min[2]..=b.max[2]
        ])
        .to_owned();
    Ok(Volume {
        data,
        spacing: v.spacing,
        affine: cropped_affine(&v.affine, b.min),
    })
}

/// Mask counterpart of [`crop`].
pub fn crop_mask(m: &BinaryMask, b: &VoxelBox) -> Result<BinaryMask> {
    b.check_within(m.shape())?;
    let data = m
        .data
        .slice(ndarray::s![
            b.min[0]..=b.max[0],
            b.min[1]..=b.max[1],
            b.min[2]..=b.max[2]
        ])
        .to_owned();
    Ok(BinaryMask {
        data,
        spacing: m.spacing,
        affine: cropped_affine(&m.affine, b.min),
    })
}

/// Interpolation mode for [`resample`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResampleMode {
    Trilinear,
    Nearest,
}

/// Resamples `v` onto `target` voxel centers mapped through both affines.
/// Out-of-support samples take value 0.
pub fn resample(v: &Volume, target: &Geometry, mode: ResampleMode) -> Result<Volume> {
    target.validate()?;
    let rot: Matrix3<f64> = v.affine.fixed_view::<3, 3>(0, 0).into();
    if rot.determinant().abs() < 1e-12 {
        return Err(Error::SingularAffine);
    }
    let inv = v
        .affine
        .try_inverse()
        .ok_or(Error::SingularAffine)?;
    let map = inv * target.affine;
    let (td, th, tw) = target.shape;
    let mut out = Array3::zeros((td, th, tw));
    for d in 0..td {
        for h in 0..th {
            for w in 0..tw {
                let p = map * Vector4::new(w as f64, h as f64, d as f64, 1.0);
                // p = (x, y, z) voxel coordinates in the source grid.
                out[[d, h, w]] = match mode {
                    ResampleMode::Trilinear => sample_trilinear(&v.data, p[2], p[1], p[0]),
                    ResampleMode::Nearest => sample_nearest(&v.data, p[2], p[1], p[0]),
                };
            }
        }
    }
    Ok(Volume {
        data: out,
        spacing: target.spacing,
        affine: target.affine,
    })
}

/// Nearest-neighbor resample of a mask (the only valid mask mode).
pub fn resample_mask(m: &BinaryMask, target: &Geometry) -> Result<BinaryMask> {
    let v = resample(&m.to_volume(), target, ResampleMode::Nearest)?;
    Ok(BinaryMask::from_volume(&v))
}

fn sample_trilinear(data: &Array3<f64>, zd: f64, yh: f64, xw: f64) -> f64 {
    let (dd, hh, ww) = (data.shape()[0], data.shape()[1], data.shape()[2]);
    let fd = zd.floor();
    let fh = yh.floor();
    let fw = xw.floor();
    let rd = zd - fd;
    let rh = yh - fh;
    let rw = xw - fw;
    let mut acc = 0.0;
    for (od, wd) in [(0i64, 1.0 - rd), (1, rd)] {
        if wd == 0.0 {
            continue;
        }
        let id = fd as i64 + od;
        if id < 0 || id >= dd as i64 {
            continue;
        }
        for (oh, whh) in [(0i64, 1.0 - rh), (1, rh)] {
            if whh == 0.0 {
                continue;
            }
            let ih = fh as i64 + oh;
            if ih < 0 || ih >= hh as i64 {
                continue;
            }
            for (ow, www) in [(0i64, 1.0 - rw), (1, rw)] {
                if www == 0.0 {
                    continue;
                }
                let iw = fw as i64 + ow;
                if iw < 0 || iw >= ww as i64 {
                    continue;
                }
                acc += wd * whh * www * data[[id as usize, ih as usize, iw as usize]];
            }
        }
    }
    acc
}

fn sample_nearest(data: &Array3<f64>, zd: f64, yh: f64, xw: f64) -> f64 {
    let (dd, hh, ww) = (data.shape()[0], data.shape()[1], data.shape()[2]);
    let id = zd.round() as i64;
    let ih = yh.round() as i64;
    let iw = xw.round() as i64;
    if id < 0 || ih < 0 || iw < 0 || id >= dd as i64 || ih >= hh as i64 || iw >= ww as i64 {
        return 0.0;
    }
    data[[id as usize, ih as usize, iw as usize]]
}

#[cfg(test)]
mod tests;
