//! Digital pelvic phantom: an ellipsoidal fluid compartment holding four
//! agar cylinders packed with near-void polystyrene spheres, imaged by a
//! spin-echo T2-weighted signal model with per-scanner gain, bias field and
//! Rician noise.
//!
//! Material constants are simulator defaults, not measured values.

mod geometry;
mod signal;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{Grid, Vec3};

pub use geometry::{
    build_material_map, generate_roi_masks, quality_regions, scene, MaterialLabel, MaterialMap, Phantom, QualityRegions,
    Sphere, ROI_DIAMETERS_MM, ROI_SLICES,
};
pub use signal::{simulate_t2w, spin_echo_signal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub pd: f64,
}

impl Material {
    pub const fn new(t1_ms: f64, t2_ms: f64, pd: f64) -> Self {
        Material { t1_ms, t2_ms, pd }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.t1_ms > self.t2_ms && self.t2_ms > 0.0 && self.pd >= 0.0 && self.t1_ms.is_finite()) {
            return Err(Error::invalid("material", format!("{name}: need T1 > T2 > 0 and PD >= 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Relaxation parameters for the three non-air materials. Air has PD 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Materials {
    pub fluid: Material,
    pub agar: Material,
    pub sphere: Material,
}

impl Default for Materials {
    fn default() -> Self {
        Materials {
            fluid: Material::new(900.0, 80.0, 1.0),
            agar: Material::new(2500.0, 250.0, 1.0),
            sphere: Material::new(1200.0, 40.0, 0.05),
        }
    }
}

/// Sphere diameters drawn uniformly from `[min_mm, max_mm]`, band picked
/// with probability proportional to `weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereBand {
    pub min_mm: f64,
    pub max_mm: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn default_fill() -> f64 {
    0.4
}

impl SphereBand {
    pub fn new(min_mm: f64, max_mm: f64, weight: f64) -> Self {
        SphereBand { min_mm, max_mm, weight }
    }
}

/// Agar cylinder with its axis along the phantom z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsertSpec {
    pub center_mm: Vec3,
    pub radius_mm: f64,
    pub height_mm: f64,
    pub sphere_bands: Vec<SphereBand>,
    pub packing_seed: u64,
    /// Target packed volume fraction; 0 leaves the insert homogeneous.
    #[serde(default = "default_fill")]
    pub fill_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub compartment_semi_axes_mm: Vec3,
    pub inserts: Vec<InsertSpec>,
    #[serde(default)]
    pub materials: Materials,
}

impl Default for PhantomSpec {
    /// Inserts follow the phantom layout: one with only 1 mm spheres, two
    /// with 3-4 mm spheres, one mixing 1, 3-4 and 7-8 mm spheres.
    fn default() -> Self {
        let insert = |x: f64, y: f64, bands: Vec<SphereBand>, seed: u64| InsertSpec {
            center_mm: [x, y, 0.0],
            radius_mm: 28.0,
            height_mm: 90.0,
            sphere_bands: bands,
            packing_seed: seed,
            fill_fraction: default_fill(),
        };
        PhantomSpec {
            compartment_semi_axes_mm: [150.0, 110.0, 75.0],
            inserts: vec![
                insert(-50.0, -32.0, vec![SphereBand::new(1.0, 1.0, 1.0)], 11),
                insert(50.0, -32.0, vec![SphereBand::new(3.0, 4.0, 1.0)], 12),
                insert(-50.0, 32.0, vec![SphereBand::new(3.0, 4.0, 1.0)], 13),
                insert(
                    50.0,
                    32.0,
                    vec![SphereBand::new(1.0, 1.0, 1.0), SphereBand::new(3.0, 4.0, 1.0), SphereBand::new(7.0, 8.0, 1.0)],
                    14,
                ),
            ],
            materials: Materials::default(),
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let [a, b, c] = self.compartment_semi_axes_mm;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::invalid("phantom", "compartment semi-axes must be positive"));
        }
        if self.inserts.len() != 4 {
            return Err(Error::invalid("phantom", format!("need exactly 4 inserts, got {}", self.inserts.len())));
        }
        for (i, ins) in self.inserts.iter().enumerate() {
            if !(ins.radius_mm > 0.0 && ins.height_mm > 0.0) {
                return Err(Error::invalid("phantom", format!("insert {i}: radius and height must be positive")));
            }
            if !(0.0..=0.74).contains(&ins.fill_fraction) {
                return Err(Error::invalid("phantom", format!("insert {i}: fill fraction must lie in [0, 0.74]")));
            }
            if ins.fill_fraction > 0.0 && ins.sphere_bands.is_empty() {
                return Err(Error::invalid("phantom", format!("insert {i}: no sphere sizes given")));
            }
            for band in &ins.sphere_bands {
                if !(1.0 <= band.min_mm && band.min_mm <= band.max_mm && band.max_mm <= 8.0 && band.weight > 0.0) {
                    return Err(Error::invalid(
                        "phantom",
                        format!("insert {i}: sphere diameters must lie in [1, 8] mm with positive weight, got {band:?}"),
                    ));
                }
                if band.max_mm > 2.0 * ins.radius_mm.min(0.5 * ins.height_mm) {
                    return Err(Error::invalid("phantom", format!("insert {i}: spheres larger than the insert")));
                }
            }
            if !cylinder_in_ellipsoid(ins, self.compartment_semi_axes_mm) {
                return Err(Error::invalid("phantom", format!("insert {i} pokes out of the compartment")));
            }
            for (j, other) in self.inserts.iter().enumerate().skip(i + 1) {
                let d = ((ins.center_mm[0] - other.center_mm[0]).powi(2) + (ins.center_mm[1] - other.center_mm[1]).powi(2)).sqrt();
                let dz = (ins.center_mm[2] - other.center_mm[2]).abs();
                if d < ins.radius_mm + other.radius_mm && dz < 0.5 * (ins.height_mm + other.height_mm) {
                    return Err(Error::invalid("phantom", format!("inserts {i} and {j} overlap")));
                }
            }
        }
        self.materials.fluid.validate("fluid")?;
        self.materials.agar.validate("agar")?;
        self.materials.sphere.validate("sphere")?;
        Ok(())
    }
}

// The ellipsoid is convex, so the cylinder fits iff both rim circles do.
fn cylinder_in_ellipsoid(ins: &InsertSpec, [a, b, c]: Vec3) -> bool {
    let [cx, cy, cz] = ins.center_mm;
    (0..720).all(|k| {
        let th = k as f64 * std::f64::consts::TAU / 720.0;
        let x = cx + ins.radius_mm * th.cos();
        let y = cy + ins.radius_mm * th.sin();
        [cz - 0.5 * ins.height_mm, cz + 0.5 * ins.height_mm]
            .iter()
            .all(|z| (x / a).powi(2) + (y / b).powi(2) + (z / c).powi(2) <= 1.0 - 1e-9)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcquisitionMode {
    /// Multi-slice 2D with slice gaps.
    #[serde(rename = "2d")]
    MultiSlice2D,
    /// Isotropic 1 mm 3D.
    #[serde(rename = "3d")]
    Isotropic3D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceParams {
    pub te_ms: f64,
    pub tr_ms: f64,
    pub slice_thickness_mm: f64,
    pub slice_spacing_mm: f64,
    pub pixel_spacing_mm: [f64; 2],
    pub fov_mm: [f64; 2],
    pub mode: AcquisitionMode,
}

/// Sub-samples averaged across the slice profile in 2D mode.
pub const SLICE_SUBSAMPLES: usize = 3;

impl SequenceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.te_ms > 0.0 && self.te_ms < self.tr_ms && self.tr_ms.is_finite()) {
            return Err(Error::invalid("sequence", format!("need 0 < TE < TR, got TE {} TR {}", self.te_ms, self.tr_ms)));
        }
        let spacings = [self.slice_thickness_mm, self.slice_spacing_mm, self.pixel_spacing_mm[0], self.pixel_spacing_mm[1]];
        if spacings.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("sequence", "spacings and thickness must be positive"));
        }
        if self.fov_mm.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(Error::invalid("sequence", "field of view must be positive"));
        }
        Ok(())
    }

    /// Voxel pitch actually used; 3D mode is forced to 1 mm isotropic.
    pub fn spacing(&self) -> Vec3 {
        match self.mode {
            AcquisitionMode::MultiSlice2D => [self.pixel_spacing_mm[0], self.pixel_spacing_mm[1], self.slice_spacing_mm],
            AcquisitionMode::Isotropic3D => [1.0, 1.0, 1.0],
        }
    }

    /// (slice thickness in mm, number of through-slice sub-samples).
    pub fn slice_profile(&self) -> (f64, usize) {
        match self.mode {
            AcquisitionMode::MultiSlice2D => (self.slice_thickness_mm, SLICE_SUBSAMPLES),
            AcquisitionMode::Isotropic3D => (1.0, 1),
        }
    }

    /// Scanner grid centered on the world origin covering the field of view
    /// in-plane and the whole compartment through-plane.
    pub fn grid(&self, spec: &PhantomSpec) -> Grid {
        let s = self.spacing();
        let nx = (self.fov_mm[0] / s[0]).round().max(1.0) as usize;
        let ny = (self.fov_mm[1] / s[1]).round().max(1.0) as usize;
        let half = (spec.compartment_semi_axes_mm[2] / s[2]).ceil() as usize;
        Grid::centered([nx, ny, 2 * half + 1], s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScannerProfile {
    pub name: String,
    pub gain: f64,
    /// Per-channel Gaussian sigma in signal units.
    pub noise_sigma: f64,
    /// Peak fractional deviation of the in-plane linear bias field.
    #[serde(default)]
    pub bias_field_amplitude: f64,
}

impl ScannerProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::invalid("scanner", format!("{}: gain must be positive", self.name)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("scanner", format!("{}: noise sigma must be >= 0", self.name)));
        }
        if !(0.0..=0.5).contains(&self.bias_field_amplitude) {
            return Err(Error::invalid("scanner", format!("{}: bias amplitude must lie in [0, 0.5]", self.name)));
        }
        Ok(())
    }
}
