use rayon::prelude::*;

use super::{Grid, RigidTransform, RoiMask};
use crate::error::{Error, Result};

/// Carries ROI labels through a rigid motion onto `target`.
///
/// `t` maps source world coordinates to target world coordinates. Every
/// target voxel center is pulled back through `t⁻¹` and takes the label of
/// the nearest source voxel (background when it falls outside the source).
pub fn transform_mask(mask: &RoiMask, t: &RigidTransform, target: &Grid) -> Result<RoiMask> {
    t.validate()?;
    target.validate()?;
    let src = &mask.grid;
    let [nx, ny, _] = target.dims;
    let plane = nx * ny;
    let mut labels = vec![0u32; target.len()];
    labels.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let world = target.index_to_world([x as f64, y as f64, z as f64]);
                let idx = src.world_to_index(t.apply_inverse(world));
                slab[x + nx * y] = nearest(src, idx).map_or(0, |i| mask.labels[i]);
            }
        }
    });

    let out = RoiMask { grid: target.clone(), labels };
    let kept = out.roi_ids();
    if let Some(&lost) = mask.roi_ids().iter().find(|id| kept.binary_search(id).is_err()) {
        return Err(Error::RoiLost(lost));
    }
    Ok(out)
}

#[inline]
fn nearest(grid: &Grid, idx: [f64; 3]) -> Option<usize> {
    let mut c = [0usize; 3];
    for a in 0..3 {
        let r = idx[a].round();
        if !(r >= 0.0 && r < grid.dims[a] as f64) {
            return None;
        }
        c[a] = r as usize;
    }
    Some(grid.index(c[0], c[1], c[2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_mask(grid: &Grid, center: [f64; 3], radius: f64, z_range: std::ops::RangeInclusive<usize>) -> RoiMask {
        let mut labels = vec![0; grid.len()];
        for (i, l) in labels.iter_mut().enumerate() {
            let [x, y, z] = grid.coords(i);
            let p = grid.index_to_world([x as f64, y as f64, z as f64]);
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            if d2 <= radius * radius && z_range.contains(&z) {
                *l = 1;
            }
        }
        RoiMask::new(grid.clone(), labels).unwrap()
    }

    #[test]
    fn identity_is_identity() {
        let g = Grid::centered([20, 18, 5], [0.6, 0.6, 5.0]);
        let m = disk_mask(&g, [0.0; 3], 3.0, 1..=3);
        let out = transform_mask(&m, &RigidTransform::identity(), &g).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn one_voxel_shift_moves_labels() {
        let g = Grid::new([6, 3, 1], [2.0, 1.0, 1.0]);
        let mut labels = vec![0; g.len()];
        labels[g.index(5, 1, 0)] = 1; // on the border: truncated
        labels[g.index(2, 1, 0)] = 2;
        let m = RoiMask::new(g.clone(), labels).unwrap();
        let t = RigidTransform::translation([2.0, 0.0, 0.0]);
        assert!(matches!(transform_mask(&m, &t, &g), Err(Error::RoiLost(1))));

        let mut labels = vec![0; g.len()];
        labels[g.index(1, 0, 0)] = 1;
        labels[g.index(3, 2, 0)] = 2;
        let m = RoiMask::new(g.clone(), labels).unwrap();
        let out = transform_mask(&m, &t, &g).unwrap();
        assert_eq!(out.labels[g.index(2, 0, 0)], 1);
        assert_eq!(out.labels[g.index(4, 2, 0)], 2);
        assert_eq!(out.labels.iter().filter(|&&l| l > 0).count(), 2);
    }

    #[test]
    fn rotated_cylinder_keeps_volume() {
        // 24 mm cylinder, 10 degree in-plane rotation about an off-center axis.
        let g = Grid::centered([121, 121, 3], [0.6, 0.6, 5.0]);
        let m = disk_mask(&g, [5.0, -3.0, 0.0], 12.0, 0..=2);
        let analytic = std::f64::consts::PI * 144.0 * 15.0;
        let t = RigidTransform::from_euler_deg([0.0, 0.0, 10.0], [1.3, -0.7, 0.0]);
        let out = transform_mask(&m, &t, &g).unwrap();
        let before = m.voxel_count(1) as f64 * g.voxel_volume();
        let after = out.voxel_count(1) as f64 * g.voxel_volume();
        assert!((before - analytic).abs() / analytic < 0.05);
        assert!((after - analytic).abs() / analytic < 0.05);
        assert!((after - before).abs() / before < 0.05);
    }
}
