//! Texture matrices of a discretized ROI.
//!
//! All direction-dependent matrices are summed over the direction set before
//! any feature is computed. In planar mode only in-plane offsets are used, so
//! every slice contributes independently and empty slices contribute nothing.

use std::collections::BTreeMap;

use super::discretize::DiscreteRoi;
use super::ExtractionMode;

type Offset = [isize; 3];

const PLANAR_DIRECTIONS: [Offset; 4] = [[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, -1, 0]];

const VOLUMETRIC_DIRECTIONS: [Offset; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// One offset per undirected direction.
pub fn directions(mode: ExtractionMode) -> &'static [Offset] {
    match mode {
        ExtractionMode::Force2D => &PLANAR_DIRECTIONS,
        ExtractionMode::Full3D => &VOLUMETRIC_DIRECTIONS,
    }
}

/// All neighbour offsets (8 in-plane or 26).
pub fn neighbours(mode: ExtractionMode) -> Vec<Offset> {
    directions(mode).iter().flat_map(|&d| [d, d.map(|v| -v)]).collect()
}

fn voxels(roi: &DiscreteRoi) -> impl Iterator<Item = ([isize; 3], u32)> + '_ {
    let [nx, ny, _] = roi.dims;
    roi.levels.iter().enumerate().filter(|(_, &l)| l > 0).map(move |(i, &l)| {
        let (x, y, z) = (i % nx, (i / nx) % ny, i / (nx * ny));
        ([x as isize, y as isize, z as isize], l)
    })
}

#[inline]
fn shifted(roi: &DiscreteRoi, p: [isize; 3], d: Offset, k: isize) -> u32 {
    roi.at(p[0] + k * d[0], p[1] + k * d[1], p[2] + k * d[2])
}

/// Symmetric co-occurrence counts at distance 1. `counts[(i−1)·Ng + (j−1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub n_levels: u32,
    pub counts: Vec<f64>,
}

pub fn glcm(roi: &DiscreteRoi, mode: ExtractionMode) -> Glcm {
    let ng = roi.n_levels as usize;
    let mut counts = vec![0.0; ng * ng];
    for (p, i) in voxels(roi) {
        for &d in directions(mode) {
            let j = shifted(roi, p, d, 1);
            if j > 0 {
                let (a, b) = (i as usize - 1, j as usize - 1);
                counts[a * ng + b] += 1.0;
                counts[b * ng + a] += 1.0;
            }
        }
    }
    Glcm { n_levels: roi.n_levels, counts }
}

/// Sparse `(gray level, size) → count` matrix shared by the run-length,
/// size-zone and dependence matrices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelSizeMatrix {
    pub entries: BTreeMap<(u32, usize), f64>,
    /// ROI voxel count.
    pub n_voxels: usize,
}

impl LevelSizeMatrix {
    fn add(&mut self, level: u32, size: usize) {
        *self.entries.entry((level, size)).or_insert(0.0) += 1.0;
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// Maximal runs of equal level along each direction.
pub fn glrlm(roi: &DiscreteRoi, mode: ExtractionMode) -> LevelSizeMatrix {
    let mut m = LevelSizeMatrix { n_voxels: roi.voxel_count(), ..Default::default() };
    for (p, l) in voxels(roi) {
        for &d in directions(mode) {
            if shifted(roi, p, d, -1) == l {
                continue;
            }
            let mut len = 1;
            while shifted(roi, p, d, len as isize) == l {
                len += 1;
            }
            m.add(l, len);
        }
    }
    m
}

/// Connected zones of equal level (8-connected in-plane or 26-connected).
pub fn glszm(roi: &DiscreteRoi, mode: ExtractionMode) -> LevelSizeMatrix {
    let [nx, ny, _] = roi.dims;
    let nb = neighbours(mode);
    let mut seen = vec![false; roi.levels.len()];
    let mut m = LevelSizeMatrix { n_voxels: roi.voxel_count(), ..Default::default() };
    let mut stack = Vec::new();
    for (start, &l) in roi.levels.iter().enumerate() {
        if l == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let p = [(i % nx) as isize, ((i / nx) % ny) as isize, (i / (nx * ny)) as isize];
            for d in &nb {
                let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
                if roi.at(q[0], q[1], q[2]) == l {
                    let qi = q[0] as usize + nx * (q[1] as usize + ny * q[2] as usize);
                    if !seen[qi] {
                        seen[qi] = true;
                        stack.push(qi);
                    }
                }
            }
        }
        m.add(l, size);
    }
    m
}

/// Dependence: one plus the number of neighbours with the same level.
pub fn gldm(roi: &DiscreteRoi, mode: ExtractionMode) -> LevelSizeMatrix {
    let nb = neighbours(mode);
    let mut m = LevelSizeMatrix { n_voxels: roi.voxel_count(), ..Default::default() };
    for (p, l) in voxels(roi) {
        let dep = 1 + nb.iter().filter(|d| roi.at(p[0] + d[0], p[1] + d[1], p[2] + d[2]) == l).count();
        m.add(l, dep);
    }
    m
}

/// Neighbourhood gray-tone difference: per level, the number of voxels with
/// at least one ROI neighbour and the summed |level − neighbour mean|.
#[derive(Debug, Clone, PartialEq)]
pub struct Ngtdm {
    pub n: Vec<f64>,
    pub s: Vec<f64>,
}

pub fn ngtdm(roi: &DiscreteRoi, mode: ExtractionMode) -> Ngtdm {
    let nb = neighbours(mode);
    let ng = roi.n_levels as usize;
    let (mut n, mut s) = (vec![0.0; ng], vec![0.0; ng]);
    for (p, l) in voxels(roi) {
        let (mut sum, mut count) = (0.0, 0usize);
        for d in &nb {
            let q = roi.at(p[0] + d[0], p[1] + d[1], p[2] + d[2]);
            if q > 0 {
                sum += q as f64;
                count += 1;
            }
        }
        if count > 0 {
            n[l as usize - 1] += 1.0;
            s[l as usize - 1] += (l as f64 - sum / count as f64).abs();
        }
    }
    Ngtdm { n, s }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roi(dims: [usize; 3], levels: Vec<u32>) -> DiscreteRoi {
        let ng = *levels.iter().max().unwrap();
        DiscreteRoi::new(dims, levels, ng).unwrap()
    }

    #[test]
    fn checkerboard_has_two_diagonal_zones() {
        let levels = (0..16).map(|i| 1 + ((i % 4 + i / 4) % 2) as u32).collect();
        let m = glszm(&roi([4, 4, 1], levels), ExtractionMode::Force2D);
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[&(1, 8)], 1.0);
        assert_eq!(m.entries[&(2, 8)], 1.0);
    }

    #[test]
    fn run_lengths_cover_each_voxel_once_per_direction() {
        let levels = vec![1, 1, 2, 2, 2, 1, 3, 3, 1];
        let r = roi([3, 3, 1], levels);
        for mode in [ExtractionMode::Force2D, ExtractionMode::Full3D] {
            let m = glrlm(&r, mode);
            let covered: f64 = m.entries.iter().map(|((_, len), c)| *len as f64 * c).sum();
            assert_eq!(covered, (9 * directions(mode).len()) as f64);
        }
    }

    #[test]
    fn glcm_is_symmetric_and_counts_pairs() {
        let r = roi([2, 1, 1], vec![1, 2]);
        let m = glcm(&r, ExtractionMode::Force2D);
        assert_eq!(m.counts, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn planar_mode_ignores_other_slices() {
        let r = roi([1, 1, 2], vec![1, 1]);
        assert_eq!(glcm(&r, ExtractionMode::Force2D).counts, vec![0.0]);
        assert_eq!(glcm(&r, ExtractionMode::Full3D).counts, vec![2.0]);
        let n = ngtdm(&r, ExtractionMode::Force2D);
        assert_eq!(n.n, vec![0.0]);
    }

    #[test]
    fn dependence_counts_matching_neighbours() {
        let r = roi([3, 1, 1], vec![1, 1, 2]);
        let m = gldm(&r, ExtractionMode::Force2D);
        assert_eq!(m.entries[&(1, 2)], 2.0);
        assert_eq!(m.entries[&(2, 1)], 1.0);
    }
}
