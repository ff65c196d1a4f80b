use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{InsertSpec, PhantomSpec, SequenceParams};
use crate::error::{Error, Result};
use crate::imageio::{Grid, RigidTransform, RoiMask, Vec3};

/// ROI diameters drawn in every insert, in id order.
pub const ROI_DIAMETERS_MM: [f64; 4] = [12.0, 24.0, 36.0, 48.0];
/// Consecutive slices spanned by each ROI.
pub const ROI_SLICES: usize = 3;

const MAX_REJECTIONS: usize = 100_000;
const CELL_MM: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MaterialLabel {
    Air = 0,
    Fluid = 1,
    Agar = 2,
    Sphere = 3,
}

impl MaterialLabel {
    pub fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            0 => MaterialLabel::Air,
            1 => MaterialLabel::Fluid,
            2 => MaterialLabel::Agar,
            3 => MaterialLabel::Sphere,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

/// Uniform cell index over one insert's bounding box; each sphere is listed in
/// every cell its bounding box touches, so a point query reads a single cell.
#[derive(Debug, Clone)]
struct SphereIndex {
    lo: Vec3,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
}

impl SphereIndex {
    fn new(ins: &InsertSpec) -> Self {
        let [cx, cy, cz] = ins.center_mm;
        let lo = [cx - ins.radius_mm, cy - ins.radius_mm, cz - 0.5 * ins.height_mm];
        let ext = [2.0 * ins.radius_mm, 2.0 * ins.radius_mm, ins.height_mm];
        let dims = ext.map(|e| (e / CELL_MM).ceil().max(1.0) as usize);
        SphereIndex { lo, dims, cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]] }
    }

    fn cell_range(&self, p: Vec3, r: f64) -> [(usize, usize); 3] {
        [0, 1, 2].map(|a| {
            let lo = ((p[a] - r - self.lo[a]) / CELL_MM).floor().max(0.0) as usize;
            let hi = ((p[a] + r - self.lo[a]) / CELL_MM).floor().max(0.0) as usize;
            (lo.min(self.dims[a] - 1), hi.min(self.dims[a] - 1))
        })
    }

    fn cells_of(&self, p: Vec3, r: f64) -> impl Iterator<Item = usize> + '_ {
        let [(x0, x1), (y0, y1), (z0, z1)] = self.cell_range(p, r);
        (z0..=z1).flat_map(move |z| {
            (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| x + self.dims[0] * (y + self.dims[1] * z)))
        })
    }

    fn insert(&mut self, id: u32, s: &Sphere) {
        let cells: Vec<usize> = self.cells_of(s.center, s.radius).collect();
        for c in cells {
            self.cells[c].push(id);
        }
    }

    fn point_cell(&self, p: Vec3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let f = ((p[a] - self.lo[a]) / CELL_MM).floor();
            if f < 0.0 || f >= self.dims[a] as f64 {
                return None;
            }
            c[a] = f as usize;
        }
        Some(c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2]))
    }
}

#[derive(Debug, Clone)]
struct PackedInsert {
    spec: InsertSpec,
    spheres: Vec<Sphere>,
    index: SphereIndex,
}

impl PackedInsert {
    fn pack(spec: &InsertSpec) -> Self {
        let mut index = SphereIndex::new(spec);
        let mut spheres: Vec<Sphere> = Vec::new();
        let cyl_volume = std::f64::consts::PI * spec.radius_mm.powi(2) * spec.height_mm;
        let target = spec.fill_fraction * cyl_volume;
        let total_weight: f64 = spec.sphere_bands.iter().map(|b| b.weight).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.packing_seed);
        let mut filled = 0.0;
        let mut rejections = 0usize;

        while filled < target && rejections < MAX_REJECTIONS {
            let mut pick = rng.random::<f64>() * total_weight;
            let band = spec
                .sphere_bands
                .iter()
                .find(|b| {
                    pick -= b.weight;
                    pick < 0.0
                })
                .unwrap_or_else(|| spec.sphere_bands.last().expect("validated non-empty"));
            let d = band.min_mm + (band.max_mm - band.min_mm) * rng.random::<f64>();
            let r = 0.5 * d;
            let rad = (spec.radius_mm - r) * rng.random::<f64>().sqrt();
            let th = std::f64::consts::TAU * rng.random::<f64>();
            let z = (spec.height_mm - d) * (rng.random::<f64>() - 0.5);
            let c = [spec.center_mm[0] + rad * th.cos(), spec.center_mm[1] + rad * th.sin(), spec.center_mm[2] + z];
            let overlaps = index.cells_of(c, r).any(|cell| {
                index.cells[cell].iter().any(|&j| {
                    let o = &spheres[j as usize];
                    dist2(o.center, c) < (o.radius + r).powi(2)
                })
            });
            if overlaps {
                rejections += 1;
                continue;
            }
            let s = Sphere { center: c, radius: r };
            index.insert(spheres.len() as u32, &s);
            spheres.push(s);
            filled += 4.0 / 3.0 * std::f64::consts::PI * r.powi(3);
        }
        PackedInsert { spec: spec.clone(), spheres, index }
    }

    #[inline]
    fn contains(&self, q: Vec3) -> bool {
        let [cx, cy, cz] = self.spec.center_mm;
        (q[0] - cx).powi(2) + (q[1] - cy).powi(2) <= self.spec.radius_mm.powi(2)
            && (q[2] - cz).abs() <= 0.5 * self.spec.height_mm
    }

    #[inline]
    fn in_sphere(&self, q: Vec3) -> bool {
        self.index.point_cell(q).is_some_and(|cell| {
            self.index.cells[cell].iter().any(|&j| {
                let s = &self.spheres[j as usize];
                dist2(s.center, q) <= s.radius * s.radius
            })
        })
    }
}

#[inline]
fn dist2(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// A validated phantom with its sphere packings realized.
///
/// Packing depends only on the spec, so one `Phantom` serves every pose,
/// grid and acquisition.
#[derive(Debug, Clone)]
pub struct Phantom {
    spec: PhantomSpec,
    inserts: Vec<PackedInsert>,
}

impl Phantom {
    pub fn new(spec: &PhantomSpec) -> Result<Self> {
        spec.validate()?;
        let inserts = spec.inserts.par_iter().map(PackedInsert::pack).collect();
        Ok(Phantom { spec: spec.clone(), inserts })
    }

    pub fn spec(&self) -> &PhantomSpec {
        &self.spec
    }

    /// Spheres packed into insert `i`, in phantom coordinates.
    pub fn spheres(&self, i: usize) -> &[Sphere] {
        &self.inserts[i].spheres
    }

    /// Packed volume fraction of insert `i`.
    pub fn fill_fraction(&self, i: usize) -> f64 {
        let ins = &self.inserts[i];
        let v: f64 = ins.spheres.iter().map(|s| 4.0 / 3.0 * std::f64::consts::PI * s.radius.powi(3)).sum();
        v / (std::f64::consts::PI * ins.spec.radius_mm.powi(2) * ins.spec.height_mm)
    }

    /// Material at a point given in phantom coordinates.
    #[inline]
    pub fn material_at(&self, q: Vec3) -> MaterialLabel {
        for ins in &self.inserts {
            if ins.contains(q) {
                return if ins.in_sphere(q) { MaterialLabel::Sphere } else { MaterialLabel::Agar };
            }
        }
        let [a, b, c] = self.spec.compartment_semi_axes_mm;
        if (q[0] / a).powi(2) + (q[1] / b).powi(2) + (q[2] / c).powi(2) <= 1.0 {
            MaterialLabel::Fluid
        } else {
            MaterialLabel::Air
        }
    }
}

/// Material labels sampled on an image grid, `sub_slices` samples per voxel
/// spread across the slice thickness.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialMap {
    pub grid: Grid,
    pub sub_slices: usize,
    /// Indexed `voxel * sub_slices + sample`.
    pub labels: Vec<MaterialLabel>,
}

impl MaterialMap {
    pub fn samples(&self, voxel: usize) -> &[MaterialLabel] {
        &self.labels[voxel * self.sub_slices..(voxel + 1) * self.sub_slices]
    }

    /// Majority label of a voxel (ties resolve to the central sample).
    pub fn dominant(&self, voxel: usize) -> MaterialLabel {
        let s = self.samples(voxel);
        let mut counts = [0usize; 4];
        for &l in s {
            counts[l as usize] += 1;
        }
        let best = *counts.iter().max().unwrap();
        let mid = s[s.len() / 2];
        if counts[mid as usize] == best {
            return mid;
        }
        MaterialLabel::from_u8(counts.iter().position(|&c| c == best).unwrap() as u8).unwrap()
    }
}

/// Labels the phantom, placed at `pose` (phantom → world), on `grid`.
///
/// `slice` is the acquisition's (thickness, sub-sample count); samples sit at
/// the centers of equal sub-slabs of the slice thickness.
pub fn build_material_map(phantom: &Phantom, grid: &Grid, pose: &RigidTransform, slice: (f64, usize)) -> Result<MaterialMap> {
    grid.validate()?;
    pose.validate()?;
    let (thickness, sub) = slice;
    if sub == 0 || !(thickness > 0.0) {
        return Err(Error::invalid("slice profile", "need a positive thickness and at least one sample"));
    }
    for (i, ins) in phantom.spec.inserts.iter().enumerate() {
        let idx = grid.world_to_index(pose.apply(ins.center_mm));
        if (0..3).any(|a| idx[a] < -0.5 || idx[a] > grid.dims[a] as f64 - 0.5) {
            return Err(Error::DegenerateGeometry(format!("insert {i} center lies outside the grid")));
        }
    }
    let offsets: Vec<f64> =
        (0..sub).map(|k| thickness * ((k as f64 + 0.5) / sub as f64 - 0.5) / grid.spacing[2]).collect();
    let [nx, ny, _] = grid.dims;
    let plane = nx * ny * sub;
    let mut labels = vec![MaterialLabel::Air; grid.len() * sub];
    labels.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                for (k, off) in offsets.iter().enumerate() {
                    let w = grid.index_to_world([x as f64, y as f64, z as f64 + off]);
                    slab[(x + nx * y) * sub + k] = phantom.material_at(pose.apply_inverse(w));
                }
            }
        }
    });
    Ok(MaterialMap { grid: grid.clone(), sub_slices: sub, labels })
}

/// Sixteen cylindrical ROIs: for each insert, diameters 12/24/36/48 mm
/// stacked in adjacent 3-slice blocks centered on the insert.
///
/// ROI id = 4 * insert + size + 1. Membership uses the in-plane distance to
/// the insert axis in phantom coordinates, so the ROIs follow the pose.
pub fn generate_roi_masks(spec: &PhantomSpec, grid: &Grid, pose: &RigidTransform) -> Result<RoiMask> {
    spec.validate()?;
    grid.validate()?;
    pose.validate()?;
    let [nx, ny, nz] = grid.dims;
    let stack = ROI_SLICES * ROI_DIAMETERS_MM.len();
    let mut labels = vec![0u32; grid.len()];
    for (i, ins) in spec.inserts.iter().enumerate() {
        let zc = grid.world_to_index(pose.apply(ins.center_mm))[2].round();
        let first = zc - (stack / 2) as f64;
        if first < 0.0 || first + stack as f64 > nz as f64 {
            return Err(Error::DegenerateGeometry(format!("ROI stack of insert {i} does not fit in {nz} slices")));
        }
        let slab_mm = stack as f64 * grid.spacing[2];
        if slab_mm > ins.height_mm {
            return Err(Error::DegenerateGeometry(format!(
                "ROI stack ({slab_mm} mm) is taller than insert {i} ({} mm)",
                ins.height_mm
            )));
        }
        for (k, d) in ROI_DIAMETERS_MM.iter().enumerate() {
            if 0.5 * d > ins.radius_mm {
                return Err(Error::DegenerateGeometry(format!("{d} mm ROI does not fit insert {i}")));
            }
            let id = (4 * i + k + 1) as u32;
            let r2 = (0.5 * d).powi(2);
            let z0 = first as usize + ROI_SLICES * k;
            for z in z0..z0 + ROI_SLICES {
                for y in 0..ny {
                    for x in 0..nx {
                        let q = pose.apply_inverse(grid.index_to_world([x as f64, y as f64, z as f64]));
                        if (q[0] - ins.center_mm[0]).powi(2) + (q[1] - ins.center_mm[1]).powi(2) <= r2 {
                            labels[grid.index(x, y, z)] = id;
                        }
                    }
                }
            }
        }
    }
    let mask = RoiMask { grid: grid.clone(), labels };
    if mask.roi_ids().len() != 4 * ROI_DIAMETERS_MM.len() {
        return Err(Error::DegenerateGeometry("some ROIs have no voxels on this grid".into()));
    }
    Ok(mask)
}

/// Voxel index sets for contrast / noise measurements: an insert disk, a
/// fluid disk between the inserts, and a background-air corner block.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityRegions {
    pub insert: Vec<usize>,
    pub fluid: Vec<usize>,
    pub air: Vec<usize>,
}

pub fn quality_regions(phantom: &Phantom, grid: &Grid, pose: &RigidTransform) -> Result<QualityRegions> {
    const DISK_MM: f64 = 10.0;
    const AIR_BLOCK_MM: f64 = 20.0;
    let spec = phantom.spec();
    let ins = &spec.inserts[0];
    let fluid_center = [0.0, 0.0, ins.center_mm[2]];
    if spec.inserts.iter().any(|o| {
        ((o.center_mm[0] - fluid_center[0]).powi(2) + (o.center_mm[1] - fluid_center[1]).powi(2)).sqrt()
            < o.radius_mm + DISK_MM
    }) {
        return Err(Error::DegenerateGeometry("no room for a fluid region at the phantom center".into()));
    }
    let z = grid.world_to_index(pose.apply(ins.center_mm))[2].round();
    if z < 0.0 || z >= grid.dims[2] as f64 {
        return Err(Error::DegenerateGeometry("insert center slice outside the grid".into()));
    }
    let z = z as usize;
    let [a, b, c] = spec.compartment_semi_axes_mm;
    let block = [0, 1].map(|ax| ((AIR_BLOCK_MM / grid.spacing[ax]).round() as usize).clamp(1, grid.dims[ax]));
    let mut regions = QualityRegions { insert: Vec::new(), fluid: Vec::new(), air: Vec::new() };
    for y in 0..grid.dims[1] {
        for x in 0..grid.dims[0] {
            let q = pose.apply_inverse(grid.index_to_world([x as f64, y as f64, z as f64]));
            let idx = grid.index(x, y, z);
            let near = |c: Vec3| (q[0] - c[0]).powi(2) + (q[1] - c[1]).powi(2) <= DISK_MM * DISK_MM;
            if near(ins.center_mm) {
                regions.insert.push(idx);
            } else if near(fluid_center) {
                regions.fluid.push(idx);
            } else if x < block[0] && y < block[1] && (q[0] / a).powi(2) + (q[1] / b).powi(2) + (q[2] / c).powi(2) > 1.0 {
                regions.air.push(idx);
            }
        }
    }
    if regions.insert.is_empty() || regions.fluid.is_empty() || regions.air.len() < 2 {
        return Err(Error::DegenerateGeometry("quality regions are empty on this grid".into()));
    }
    Ok(regions)
}

/// Scanner grid and material map for one acquisition.
pub fn scene(
    phantom: &Phantom,
    seq: &SequenceParams,
    pose: &RigidTransform,
) -> Result<(MaterialMap, Grid)> {
    let grid = seq.grid(phantom.spec());
    let map = build_material_map(phantom, &grid, pose, seq.slice_profile())?;
    Ok((map, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{AcquisitionMode, SphereBand};

    fn small_seq() -> SequenceParams {
        SequenceParams {
            te_ms: 100.0,
            tr_ms: 5000.0,
            slice_thickness_mm: 5.0,
            slice_spacing_mm: 6.0,
            pixel_spacing_mm: [1.2, 1.2],
            fov_mm: [320.0, 240.0],
            mode: AcquisitionMode::MultiSlice2D,
        }
    }

    #[test]
    fn one_mm_insert_has_only_half_mm_radii() {
        let p = Phantom::new(&PhantomSpec::default()).unwrap();
        assert!(!p.spheres(0).is_empty());
        assert!(p.spheres(0).iter().all(|s| s.radius == 0.5));
        assert!(p.spheres(3).iter().any(|s| s.radius >= 3.5));
        for i in 0..4 {
            let f = p.fill_fraction(i);
            assert!(f > 0.15 && f <= 0.4 + 0.01, "insert {i} fill {f}");
        }
    }

    #[test]
    fn spheres_do_not_overlap_and_stay_inside() {
        let mut spec = PhantomSpec::default();
        spec.inserts[3].sphere_bands = vec![SphereBand::new(6.0, 8.0, 1.0)];
        let p = Phantom::new(&spec).unwrap();
        let ins = &spec.inserts[3];
        let s = p.spheres(3);
        for (i, a) in s.iter().enumerate() {
            let rad = ((a.center[0] - ins.center_mm[0]).powi(2) + (a.center[1] - ins.center_mm[1]).powi(2)).sqrt();
            assert!(rad + a.radius <= ins.radius_mm + 1e-9);
            assert!((a.center[2] - ins.center_mm[2]).abs() + a.radius <= 0.5 * ins.height_mm + 1e-9);
            for b in &s[i + 1..] {
                assert!(dist2(a.center, b.center) >= (a.radius + b.radius).powi(2));
            }
        }
    }

    #[test]
    fn packing_is_deterministic() {
        let a = Phantom::new(&PhantomSpec::default()).unwrap();
        let b = Phantom::new(&PhantomSpec::default()).unwrap();
        for i in 0..4 {
            assert_eq!(a.spheres(i), b.spheres(i));
        }
        let seq = small_seq();
        let (ma, _) = scene(&a, &seq, &RigidTransform::identity()).unwrap();
        let (mb, _) = scene(&b, &seq, &RigidTransform::identity()).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn insert_center_is_never_air() {
        let p = Phantom::new(&PhantomSpec::default()).unwrap();
        for ins in &p.spec().inserts {
            let m = p.material_at(ins.center_mm);
            assert!(matches!(m, MaterialLabel::Agar | MaterialLabel::Sphere));
        }
        assert_eq!(p.material_at([0.0, 0.0, 0.0]), MaterialLabel::Fluid);
        assert_eq!(p.material_at([149.0, 109.0, 0.0]), MaterialLabel::Air);
    }

    #[test]
    fn sixteen_rois_with_expected_volume() {
        let spec = PhantomSpec::default();
        let seq = small_seq();
        let grid = seq.grid(&spec);
        let m = generate_roi_masks(&spec, &grid, &RigidTransform::identity()).unwrap();
        assert_eq!(m.roi_ids(), (1..=16).collect::<Vec<_>>());
        assert_eq!(generate_roi_masks(&spec, &grid, &RigidTransform::identity()).unwrap(), m);
        // Each ROI spans exactly three slices.
        for id in 1..=16 {
            let (lo, hi) = m.bounding_box(Some(id)).unwrap();
            assert_eq!(hi[2] - lo[2] + 1, ROI_SLICES);
        }
        let analytic = std::f64::consts::PI * 24.0f64.powi(2) * 3.0 * grid.spacing[2] / grid.voxel_volume();
        for id in [4, 8, 12, 16] {
            let n = m.voxel_count(id) as f64;
            assert!((n - analytic).abs() / analytic < 0.10, "roi {id}: {n} vs {analytic}");
        }
    }

    #[test]
    fn insert_outside_grid_is_degenerate() {
        let spec = PhantomSpec::default();
        let p = Phantom::new(&spec).unwrap();
        let grid = Grid::centered([10, 10, 3], [1.0, 1.0, 1.0]);
        let r = build_material_map(&p, &grid, &RigidTransform::identity(), (1.0, 1));
        assert!(matches!(r, Err(Error::DegenerateGeometry(_))));
        assert!(matches!(
            generate_roi_masks(&spec, &grid, &RigidTransform::identity()),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn quality_regions_are_disjoint_and_pure() {
        let p = Phantom::new(&PhantomSpec::default()).unwrap();
        let seq = small_seq();
        let (map, grid) = scene(&p, &seq, &RigidTransform::identity()).unwrap();
        let q = quality_regions(&p, &grid, &RigidTransform::identity()).unwrap();
        assert!(q.fluid.iter().all(|&i| map.dominant(i) == MaterialLabel::Fluid));
        assert!(q.air.iter().all(|&i| map.dominant(i) == MaterialLabel::Air));
        assert!(q.insert.iter().all(|&i| matches!(map.dominant(i), MaterialLabel::Agar | MaterialLabel::Sphere)));
    }
}
