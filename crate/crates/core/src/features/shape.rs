//! Shape features from a triangle mesh of the ROI boundary.
//!
//! The mesh is extracted with marching tetrahedra on the binary mask at
//! isolevel 0.5: each cube between voxel centres is split into six
//! tetrahedra around its main diagonal, so neighbouring cubes share face
//! diagonals and the surface is closed. Vertices sit on edge midpoints and
//! are kept in doubled integer index coordinates until the end.

use std::collections::HashMap;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::imageio::{Grid, RoiMask};

type P2 = [i64; 3];

const TETS: [[usize; 4]; 6] = [[0, 7, 1, 3], [0, 7, 3, 2], [0, 7, 2, 6], [0, 7, 6, 4], [0, 7, 4, 5], [0, 7, 5, 1]];

fn corner(k: usize) -> [i64; 3] {
    [(k & 1) as i64, ((k >> 1) & 1) as i64, ((k >> 2) & 1) as i64]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn f(p: P2) -> [f64; 3] {
    p.map(|v| v as f64)
}

/// Outward-oriented triangles in doubled index coordinates of a padded patch.
fn mesh(inside: &[bool], dims: [usize; 3]) -> Vec<[P2; 3]> {
    let [nx, ny, nz] = dims;
    let at = |p: [i64; 3]| inside[p[0] as usize + nx * (p[1] as usize + ny * p[2] as usize)];
    let mut tris = Vec::new();
    for z in 0..nz - 1 {
        for y in 0..ny - 1 {
            for x in 0..nx - 1 {
                let base = [x as i64, y as i64, z as i64];
                let c: [P2; 8] = std::array::from_fn(|k| {
                    let o = corner(k);
                    [base[0] + o[0], base[1] + o[1], base[2] + o[2]]
                });
                let ins: [bool; 8] = std::array::from_fn(|k| at(c[k]));
                if ins.iter().all(|&b| b) || ins.iter().all(|&b| !b) {
                    continue;
                }
                for t in TETS {
                    let (inn, out): (Vec<usize>, Vec<usize>) = t.iter().partition(|&&k| ins[k]);
                    let mid = |a: usize, b: usize| [c[a][0] + c[b][0], c[a][1] + c[b][1], c[a][2] + c[b][2]];
                    let centroid = |ks: &[usize]| {
                        let mut s = [0.0; 3];
                        for &k in ks {
                            for a in 0..3 {
                                s[a] += 2.0 * c[k][a] as f64 / ks.len() as f64;
                            }
                        }
                        s
                    };
                    let dir = sub(centroid(&out), centroid(&inn));
                    let mut emit = |tri: [P2; 3]| {
                        let n = cross(sub(f(tri[1]), f(tri[0])), sub(f(tri[2]), f(tri[0])));
                        tris.push(if dot(n, dir) >= 0.0 { tri } else { [tri[0], tri[2], tri[1]] });
                    };
                    match (inn.len(), out.len()) {
                        (1, 3) => emit([mid(inn[0], out[0]), mid(inn[0], out[1]), mid(inn[0], out[2])]),
                        (3, 1) => emit([mid(out[0], inn[0]), mid(out[0], inn[1]), mid(out[0], inn[2])]),
                        (2, 2) => {
                            let (a, b, cc, d) = (inn[0], inn[1], out[0], out[1]);
                            let q = [mid(a, cc), mid(a, d), mid(b, d), mid(b, cc)];
                            emit([q[0], q[1], q[2]]);
                            emit([q[0], q[2], q[3]]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    tris
}

fn max_pairwise(points: &[[f64; 3]]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = sub(*a, *b);
            best = best.max(dot(d, d));
        }
    }
    best.sqrt()
}

fn max_within_groups(points: &[(i64, [f64; 3])]) -> f64 {
    let mut groups: HashMap<i64, Vec<[f64; 3]>> = HashMap::new();
    for &(k, p) in points {
        groups.entry(k).or_default().push(p);
    }
    groups.values().map(|g| max_pairwise(g)).fold(0.0, f64::max)
}

/// The 14 shape features of `roi_id`, in column order.
pub fn shape_features(mask: &RoiMask, roi_id: u32) -> Result<[f64; 14]> {
    let (lo, hi) = mask.bounding_box(Some(roi_id)).ok_or(Error::RoiLost(roi_id))?;
    let grid: &Grid = &mask.grid;
    let dims = [0, 1, 2].map(|a| hi[a] - lo[a] + 3);
    let mut inside = vec![false; dims[0] * dims[1] * dims[2]];
    let mut centres = Vec::new();
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                if mask.labels[grid.index(x, y, z)] == roi_id {
                    let (px, py, pz) = (x - lo[0] + 1, y - lo[1] + 1, z - lo[2] + 1);
                    inside[px + dims[0] * (py + dims[1] * pz)] = true;
                    centres.push(grid.index_to_world([x as f64, y as f64, z as f64]));
                }
            }
        }
    }
    let n_vox = centres.len();

    let to_world = |p: P2| grid.index_to_world([0, 1, 2].map(|a| lo[a] as f64 - 1.0 + p[a] as f64 / 2.0));
    let tris = mesh(&inside, dims);
    let reference = to_world([dims[0] as i64, dims[1] as i64, dims[2] as i64]);
    let (mut volume, mut area) = (0.0, 0.0);
    for t in &tris {
        let [a, b, c] = t.map(|p| sub(to_world(p), reference));
        volume += dot(a, cross(b, c)) / 6.0;
        let n = cross(sub(b, a), sub(c, a));
        area += 0.5 * dot(n, n).sqrt();
    }
    let volume = volume.abs();

    // The farthest point of a set from any other point is an end of its
    // axis-aligned line, so only line ends are compared.
    let mut x_lines: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    let mut y_lines: HashMap<(i64, i64), (i64, i64)> = HashMap::new();
    for p in tris.iter().flatten() {
        let e = x_lines.entry((p[1], p[2])).or_insert((p[0], p[0]));
        *e = (e.0.min(p[0]), e.1.max(p[0]));
        let e = y_lines.entry((p[0], p[2])).or_insert((p[1], p[1]));
        *e = (e.0.min(p[1]), e.1.max(p[1]));
    }
    let mut x_ends: Vec<P2> = x_lines.iter().flat_map(|(&(y, z), &(a, b))| [[a, y, z], [b, y, z]]).collect();
    let mut y_ends: Vec<P2> = y_lines.iter().flat_map(|(&(x, z), &(a, b))| [[x, a, z], [x, b, z]]).collect();
    x_ends.sort_unstable();
    x_ends.dedup();
    y_ends.sort_unstable();
    y_ends.dedup();
    let xw: Vec<[f64; 3]> = x_ends.iter().map(|&p| to_world(p)).collect();
    let d3 = max_pairwise(&xw);
    let by = |ends: &[P2], world: &[[f64; 3]], axis: usize| -> f64 {
        let pts: Vec<(i64, [f64; 3])> = ends.iter().zip(world).map(|(p, w)| (p[axis], *w)).collect();
        max_within_groups(&pts)
    };
    let d_slice = by(&x_ends, &xw, 2);
    let d_column = by(&x_ends, &xw, 1);
    let yw: Vec<[f64; 3]> = y_ends.iter().map(|&p| to_world(p)).collect();
    let d_row = by(&y_ends, &yw, 0);

    let n = n_vox as f64;
    let mean = centres.iter().fold([0.0; 3], |s, c| [s[0] + c[0] / n, s[1] + c[1] / n, s[2] + c[2] / n]);
    let mut cov = Matrix3::<f64>::zeros();
    if n_vox > 1 {
        for c in &centres {
            let d = nalgebra::Vector3::from(sub(*c, mean));
            cov += d * d.transpose();
        }
        cov /= n - 1.0;
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().map(|v| v.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let [major, minor, least] = [ev[0], ev[1], ev[2]];
    let ratio = |v: f64| if major > 0.0 { (v / major).sqrt() } else { 0.0 };

    Ok([
        ratio(minor),
        ratio(least),
        4.0 * least.sqrt(),
        4.0 * major.sqrt(),
        d_column,
        d_row,
        d_slice,
        d3,
        volume,
        4.0 * minor.sqrt(),
        (36.0 * std::f64::consts::PI * volume * volume).cbrt() / area,
        area,
        area / volume,
        n * grid.voxel_volume(),
    ])
}
