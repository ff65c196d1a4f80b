//! Volumetric grid model shared by every other module, plus NIfTI-1 IO and
//! rigid mask transfer.
//!
//! Voxels are stored x-fastest: index = x + nx * (y + ny * z). Physical
//! coordinates follow `p = origin + direction * (spacing ⊙ index)`, with the
//! columns of `direction` giving the world direction of each index axis.

mod nifti;
mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use nifti::{
    read_nifti, read_nifti_bytes, read_nifti_mask, write_nifti, write_nifti_mask,
    write_nifti_with_order, ByteOrder, NiftiDatatype,
};
pub use transform::transform_mask;

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

const ORTHO_TOL: f64 = 1e-6;

/// Geometry of a voxel grid without any voxel payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dims: [usize; 3],
    /// Voxel pitch in mm.
    pub spacing: Vec3,
    /// World position of voxel (0, 0, 0) in mm.
    pub origin: Vec3,
    /// Row-major; column `c` is the unit direction of index axis `c`.
    pub direction: Mat3,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: Vec3) -> Self {
        Grid { dims, spacing, origin: [0.0; 3], direction: IDENTITY3 }
    }

    /// Grid whose geometric center sits at the world origin.
    pub fn centered(dims: [usize; 3], spacing: Vec3) -> Self {
        let origin = [0, 1, 2].map(|a| -0.5 * (dims[a] as f64 - 1.0) * spacing[a]);
        Grid { dims, spacing, origin, direction: IDENTITY3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid", format!("dims must be >= 1, got {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("grid", format!("spacing must be > 0, got {:?}", self.spacing)));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("grid", "origin must be finite"));
        }
        if !is_orthonormal(&self.direction, ORTHO_TOL) {
            return Err(Error::invalid("grid", "direction matrix is not orthonormal"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    /// World position of a (possibly fractional) continuous index.
    #[inline]
    pub fn index_to_world(&self, idx: Vec3) -> Vec3 {
        let scaled = [idx[0] * self.spacing[0], idx[1] * self.spacing[1], idx[2] * self.spacing[2]];
        add(self.origin, mat_vec(&self.direction, scaled))
    }

    /// Continuous index of a world position.
    #[inline]
    pub fn world_to_index(&self, p: Vec3) -> Vec3 {
        let local = mat_t_vec(&self.direction, sub(p, self.origin));
        [local[0] / self.spacing[0], local[1] / self.spacing[1], local[2] / self.spacing[2]]
    }

    /// Sub-grid covering index range `lo..=hi` on each axis.
    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> Grid {
        let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 1);
        let origin = self.index_to_world([lo[0] as f64, lo[1] as f64, lo[2] as f64]);
        Grid { dims, spacing: self.spacing, origin, direction: self.direction }
    }
}

/// 3D scalar image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    pub grid: Grid,
    pub voxels: Vec<f64>,
}

impl ImageVolume {
    pub fn new(grid: Grid, voxels: Vec<f64>) -> Result<Self> {
        let v = ImageVolume { grid, voxels };
        v.validate()?;
        Ok(v)
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        ImageVolume { grid, voxels: vec![0.0; n] }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.voxels.len() != self.grid.len() {
            return Err(Error::invalid(
                "image",
                format!("{} voxels for dims {:?}", self.voxels.len(), self.grid.dims),
            ));
        }
        if self.voxels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image", "non-finite intensity"));
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.voxels[self.grid.index(x, y, z)]
    }

    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> ImageVolume {
        let grid = self.grid.crop(lo, hi);
        let mut voxels = Vec::with_capacity(grid.len());
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                let start = self.grid.index(lo[0], y, z);
                voxels.extend_from_slice(&self.voxels[start..=start + hi[0] - lo[0]]);
            }
        }
        ImageVolume { grid, voxels }
    }

    pub fn max_abs(&self) -> f64 {
        self.voxels.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Label volume: 0 is background, `k > 0` is ROI `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    pub grid: Grid,
    pub labels: Vec<u32>,
}

impl RoiMask {
    pub fn new(grid: Grid, labels: Vec<u32>) -> Result<Self> {
        let m = RoiMask { grid, labels };
        m.validate()?;
        Ok(m)
    }

    /// Checks the grid, the label count, and that ROI ids are exactly `1..=m`.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.labels.len() != self.grid.len() {
            return Err(Error::invalid(
                "mask",
                format!("{} labels for dims {:?}", self.labels.len(), self.grid.dims),
            ));
        }
        let ids = self.roi_ids();
        if ids.iter().enumerate().any(|(i, &id)| id as usize != i + 1) {
            return Err(Error::invalid("mask", format!("ROI ids are not contiguous from 1: {ids:?}")));
        }
        Ok(())
    }

    /// Sorted ids of the ROIs present in the mask.
    pub fn roi_ids(&self) -> Vec<u32> {
        let max = self.labels.iter().copied().max().unwrap_or(0) as usize;
        let mut seen = vec![false; max + 1];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=max).filter(|&i| seen[i]).map(|i| i as u32).collect()
    }

    pub fn voxel_count(&self, id: u32) -> usize {
        self.labels.iter().filter(|&&l| l == id).count()
    }

    /// Inclusive index bounding box of one ROI, or of all ROIs when `id` is None.
    pub fn bounding_box(&self, id: Option<u32>) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for (i, &l) in self.labels.iter().enumerate() {
            let hit = match id {
                Some(id) => l == id,
                None => l != 0,
            };
            if hit {
                any = true;
                let c = self.grid.coords(i);
                for a in 0..3 {
                    lo[a] = lo[a].min(c[a]);
                    hi[a] = hi[a].max(c[a]);
                }
            }
        }
        any.then_some((lo, hi))
    }

    pub fn crop(&self, lo: [usize; 3], hi: [usize; 3]) -> RoiMask {
        let grid = self.grid.crop(lo, hi);
        let mut labels = Vec::with_capacity(grid.len());
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                let start = self.grid.index(lo[0], y, z);
                labels.extend_from_slice(&self.labels[start..=start + hi[0] - lo[0]]);
            }
        }
        RoiMask { grid, labels }
    }

    /// True when both live on the same voxel lattice.
    pub fn matches(&self, image: &ImageVolume) -> bool {
        self.grid.dims == image.grid.dims
    }
}

/// Rigid motion `p' = rotation * p + translation` (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform { rotation: IDENTITY3, translation: [0.0; 3] }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let t = RigidTransform { rotation, translation };
        t.validate()?;
        Ok(t)
    }

    pub fn translation(t: Vec3) -> Self {
        RigidTransform { rotation: IDENTITY3, translation: t }
    }

    /// Rotation about x, then y, then z (extrinsic), angles in degrees.
    pub fn from_euler_deg(angles: Vec3, translation: Vec3) -> Self {
        let [ax, ay, az] = angles.map(f64::to_radians);
        let (sx, cx) = ax.sin_cos();
        let (sy, cy) = ay.sin_cos();
        let (sz, cz) = az.sin_cos();
        let rx = [[1.0, 0.0, 0.0], [0.0, cx, -sx], [0.0, sx, cx]];
        let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
        let rz = [[cz, -sz, 0.0], [sz, cz, 0.0], [0.0, 0.0, 1.0]];
        RigidTransform { rotation: mat_mul(&rz, &mat_mul(&ry, &rx)), translation }
    }

    pub fn validate(&self) -> Result<()> {
        if !is_orthonormal(&self.rotation, 1e-9) || (det3(&self.rotation) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("rigid transform", "rotation must be orthonormal with det 1"));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("rigid transform", "translation must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }

    #[inline]
    pub fn apply_inverse(&self, p: Vec3) -> Vec3 {
        mat_t_vec(&self.rotation, sub(p, self.translation))
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = transpose(&self.rotation);
        let t = mat_vec(&rt, self.translation).map(|v| -v);
        RigidTransform { rotation: rt, translation: t }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: mat_mul(&self.rotation, &other.rotation),
            translation: self.apply(other.translation),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RigidTransformRepr {
    Matrix { rotation: Mat3, translation: Vec3 },
    Euler { euler_deg: Vec3, translation: Vec3 },
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: RigidTransformRepr) -> Result<Self> {
        match r {
            RigidTransformRepr::Matrix { rotation, translation } => RigidTransform::new(rotation, translation),
            RigidTransformRepr::Euler { euler_deg, translation } => {
                Ok(RigidTransform::from_euler_deg(euler_deg, translation))
            }
        }
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        RigidTransformRepr::Matrix { rotation: t.rotation, translation: t.translation }
    }
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

#[inline]
pub(crate) fn mat_t_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [0, 1, 2].map(|c| m[0][c] * v[0] + m[1][c] * v[1] + m[2][c] * v[2])
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

pub(crate) fn transpose(m: &Mat3) -> Mat3 {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[c][r]))
}

pub(crate) fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub(crate) fn is_orthonormal(m: &Mat3, tol: f64) -> bool {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return false;
    }
    for a in 0..3 {
        for b in a..3 {
            let dot: f64 = (0..3).map(|r| m[r][a] * m[r][b]).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (dot - want).abs() > tol {
                return false;
            }
        }
    }
    true
}
