//! Texture features from the matrices in [`super::matrices`].
//!
//! Entropies are base 2 over nonzero probabilities. Degenerate inputs never
//! produce NaN: each feature has a fixed fallback.

use nalgebra::DMatrix;

use super::discretize::DiscreteRoi;
use super::matrices::{self, Glcm, LevelSizeMatrix, Ngtdm};
use super::ExtractionMode;

fn xlog2(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// The 24 co-occurrence features, in column order.
pub fn glcm_features(m: &Glcm) -> [f64; 24] {
    let ng = m.n_levels as usize;
    let total: f64 = m.counts.iter().sum();
    if total == 0.0 {
        return [0.0; 24];
    }
    let p: Vec<f64> = m.counts.iter().map(|c| c / total).collect();
    let at = |i: usize, j: usize| p[i * ng + j];
    let lv = |i: usize| (i + 1) as f64;

    let mut px = vec![0.0; ng];
    let mut py = vec![0.0; ng];
    let mut psum = vec![0.0; 2 * ng + 1];
    let mut pdiff = vec![0.0; ng];
    for i in 0..ng {
        for j in 0..ng {
            let v = at(i, j);
            px[i] += v;
            py[j] += v;
            psum[i + j + 2] += v;
            pdiff[i.abs_diff(j)] += v;
        }
    }
    let mux: f64 = (0..ng).map(|i| lv(i) * px[i]).sum();
    let muy: f64 = (0..ng).map(|j| lv(j) * py[j]).sum();
    let varx: f64 = (0..ng).map(|i| (lv(i) - mux).powi(2) * px[i]).sum();
    let vary: f64 = (0..ng).map(|j| (lv(j) - muy).powi(2) * py[j]).sum();

    let (mut autocorr, mut prom, mut shade, mut tend, mut contrast, mut energy, mut maxp) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut hxy, mut hxy1, mut hxy2) = (0.0, 0.0, 0.0);
    for i in 0..ng {
        for j in 0..ng {
            let pxy = px[i] * py[j];
            if pxy > 0.0 {
                hxy2 -= xlog2(pxy);
            }
            let v = at(i, j);
            if v == 0.0 {
                continue;
            }
            let (a, b) = (lv(i), lv(j));
            let c = a + b - mux - muy;
            autocorr += v * a * b;
            prom += v * c.powi(4);
            shade += v * c.powi(3);
            tend += v * c * c;
            contrast += v * (a - b).powi(2);
            energy += v * v;
            maxp = f64::max(maxp, v);
            hxy -= xlog2(v);
            hxy1 -= v * pxy.log2();
        }
    }
    let hx: f64 = -px.iter().map(|&v| xlog2(v)).sum::<f64>();
    let hy: f64 = -py.iter().map(|&v| xlog2(v)).sum::<f64>();

    let correlation = if varx * vary > 0.0 { (autocorr - mux * muy) / (varx * vary).sqrt() } else { 1.0 };
    let diff_avg: f64 = (0..ng).map(|k| k as f64 * pdiff[k]).sum();
    let diff_ent: f64 = -pdiff.iter().map(|&v| xlog2(v)).sum::<f64>();
    let diff_var: f64 = (0..ng).map(|k| (k as f64 - diff_avg).powi(2) * pdiff[k]).sum();
    let ngf = ng as f64;
    let (mut id, mut idm, mut idmn, mut idn, mut inv_var) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &v) in pdiff.iter().enumerate() {
        let kf = k as f64;
        id += v / (1.0 + kf);
        idm += v / (1.0 + kf * kf);
        idmn += v / (1.0 + kf * kf / (ngf * ngf));
        idn += v / (1.0 + kf / ngf);
        if k > 0 {
            inv_var += v / (kf * kf);
        }
    }
    let hmax = hx.max(hy);
    let imc1 = if hmax > 0.0 { (hxy - hxy1) / hmax } else { 0.0 };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();
    let sum_avg: f64 = psum.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let sum_ent: f64 = -psum.iter().map(|&v| xlog2(v)).sum::<f64>();

    [
        autocorr,
        prom,
        shade,
        tend,
        contrast,
        correlation,
        diff_avg,
        diff_ent,
        diff_var,
        id,
        idm,
        idmn,
        idn,
        imc1,
        imc2,
        inv_var,
        mux,
        energy,
        hxy,
        mcc(&p, &px, &py, ng),
        maxp,
        sum_avg,
        sum_ent,
        varx,
    ]
}

/// Maximal correlation coefficient: square root of the second largest
/// eigenvalue of `Q = Dx⁻¹ P Dy⁻¹ Pᵀ`, evaluated through the similar
/// symmetric matrix `B Bᵀ` with `B = Dx^{-1/2} P Dy^{-1/2}`.
fn mcc(p: &[f64], px: &[f64], py: &[f64], ng: usize) -> f64 {
    let rows: Vec<usize> = (0..ng).filter(|&i| px[i] > 0.0).collect();
    let cols: Vec<usize> = (0..ng).filter(|&j| py[j] > 0.0).collect();
    if rows.len() < 2 {
        return 1.0;
    }
    let b = DMatrix::from_fn(rows.len(), cols.len(), |r, c| {
        let (i, j) = (rows[r], cols[c]);
        p[i * ng + j] / (px[i] * py[j]).sqrt()
    });
    let mut ev: Vec<f64> = (&b * b.transpose()).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev[1].max(0.0).sqrt()
}

/// Moments of a level/size matrix, normalised by the total count.
struct LevelSizeStats {
    total: f64,
    small: f64,
    large: f64,
    low_gray: f64,
    high_gray: f64,
    small_low: f64,
    small_high: f64,
    large_low: f64,
    large_high: f64,
    gray_nonuniformity: f64,
    size_nonuniformity: f64,
    gray_variance: f64,
    size_variance: f64,
    entropy: f64,
}

fn level_size_stats(m: &LevelSizeMatrix) -> Option<LevelSizeStats> {
    let total = m.total();
    if total == 0.0 {
        return None;
    }
    let mut s = LevelSizeStats {
        total,
        small: 0.0,
        large: 0.0,
        low_gray: 0.0,
        high_gray: 0.0,
        small_low: 0.0,
        small_high: 0.0,
        large_low: 0.0,
        large_high: 0.0,
        gray_nonuniformity: 0.0,
        size_nonuniformity: 0.0,
        gray_variance: 0.0,
        size_variance: 0.0,
        entropy: 0.0,
    };
    let mut by_gray = std::collections::BTreeMap::<u32, f64>::new();
    let mut by_size = std::collections::BTreeMap::<usize, f64>::new();
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for (&(i, j), &c) in &m.entries {
        let (fi, fj) = (i as f64, j as f64);
        let (i2, j2) = (fi * fi, fj * fj);
        s.small += c / j2;
        s.large += c * j2;
        s.low_gray += c / i2;
        s.high_gray += c * i2;
        s.small_low += c / (i2 * j2);
        s.small_high += c * i2 / j2;
        s.large_low += c * j2 / i2;
        s.large_high += c * i2 * j2;
        *by_gray.entry(i).or_default() += c;
        *by_size.entry(j).or_default() += c;
        let p = c / total;
        mu_i += p * fi;
        mu_j += p * fj;
        s.entropy -= xlog2(p);
    }
    for (&(i, j), &c) in &m.entries {
        let p = c / total;
        s.gray_variance += p * (i as f64 - mu_i).powi(2);
        s.size_variance += p * (j as f64 - mu_j).powi(2);
    }
    for v in [&mut s.small, &mut s.large, &mut s.low_gray, &mut s.high_gray, &mut s.small_low, &mut s.small_high, &mut s.large_low, &mut s.large_high] {
        *v /= total;
    }
    s.gray_nonuniformity = by_gray.values().map(|v| v * v).sum::<f64>() / total;
    s.size_nonuniformity = by_size.values().map(|v| v * v).sum::<f64>() / total;
    Some(s)
}

/// Run-length (`n_p` = Σ length · count) or size-zone (`n_p` = ROI voxels)
/// features; the two share formulas and column layout.
fn run_or_zone_features(m: &LevelSizeMatrix, n_p: f64) -> [f64; 16] {
    let Some(s) = level_size_stats(m) else { return [0.0; 16] };
    [
        s.gray_nonuniformity,
        s.gray_nonuniformity / s.total,
        s.gray_variance,
        s.high_gray,
        s.large,
        s.large_high,
        s.large_low,
        s.low_gray,
        s.entropy,
        s.size_nonuniformity,
        s.size_nonuniformity / s.total,
        s.total / n_p,
        s.size_variance,
        s.small,
        s.small_high,
        s.small_low,
    ]
}

pub fn glrlm_features(m: &LevelSizeMatrix) -> [f64; 16] {
    let n_p: f64 = m.entries.iter().map(|(&(_, len), c)| len as f64 * c).sum();
    run_or_zone_features(m, n_p)
}

pub fn glszm_features(m: &LevelSizeMatrix) -> [f64; 16] {
    run_or_zone_features(m, m.n_voxels as f64)
}

pub fn gldm_features(m: &LevelSizeMatrix) -> [f64; 14] {
    let Some(s) = level_size_stats(m) else { return [0.0; 14] };
    [
        s.entropy,
        s.size_nonuniformity,
        s.size_nonuniformity / s.total,
        s.size_variance,
        s.gray_nonuniformity,
        s.gray_variance,
        s.high_gray,
        s.large,
        s.large_high,
        s.large_low,
        s.low_gray,
        s.small,
        s.small_high,
        s.small_low,
    ]
}

pub fn ngtdm_features(m: &Ngtdm) -> [f64; 5] {
    let nvp: f64 = m.n.iter().sum();
    if nvp == 0.0 {
        return [0.0, 1e6, 0.0, 0.0, 0.0];
    }
    let present: Vec<(f64, f64, f64)> = m
        .n
        .iter()
        .zip(&m.s)
        .enumerate()
        .filter(|(_, (&n, _))| n > 0.0)
        .map(|(i, (&n, &s))| ((i + 1) as f64, n / nvp, s))
        .collect();
    let ngp = present.len() as f64;
    let ps: f64 = present.iter().map(|(_, p, s)| p * s).sum();
    let s_total: f64 = present.iter().map(|(_, _, s)| s).sum();

    let (mut contrast, mut busy_den, mut complexity, mut strength) = (0.0, 0.0, 0.0, 0.0);
    for &(i, pi, si) in &present {
        for &(j, pj, sj) in &present {
            contrast += pi * pj * (i - j).powi(2);
            busy_den += (i * pi - j * pj).abs();
            complexity += (i - j).abs() * (pi * si + pj * sj) / (pi + pj);
            strength += (pi + pj) * (i - j).powi(2);
        }
    }
    let coarseness = if ps > 0.0 { 1.0 / ps } else { 1e6 };
    let contrast = if ngp > 1.0 { contrast / (ngp * (ngp - 1.0)) * s_total / nvp } else { 0.0 };
    let busyness = if busy_den > 0.0 { ps / busy_den } else { 0.0 };
    let strength = if s_total > 0.0 { strength / s_total } else { 0.0 };
    [busyness, coarseness, complexity / nvp, contrast, strength]
}

/// All texture classes of one ROI, in column order
/// (GLCM, GLRLM, GLSZM, NGTDM, GLDM).
pub fn texture_features(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<f64> {
    let mut out = Vec::with_capacity(75);
    out.extend(glcm_features(&matrices::glcm(roi, mode)));
    out.extend(glrlm_features(&matrices::glrlm(roi, mode)));
    out.extend(glszm_features(&matrices::glszm(roi, mode)));
    out.extend(ngtdm_features(&matrices::ngtdm(roi, mode)));
    out.extend(gldm_features(&matrices::gldm(roi, mode)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::names;

    fn roi(dims: [usize; 3], levels: Vec<u32>) -> DiscreteRoi {
        let ng = *levels.iter().max().unwrap();
        DiscreteRoi::new(dims, levels, ng).unwrap()
    }

    #[test]
    fn single_level_fallbacks() {
        let r = roi([3, 3, 2], vec![1; 18]);
        for mode in [ExtractionMode::Force2D, ExtractionMode::Full3D] {
            let f = texture_features(&r, mode);
            assert!(f.iter().all(|v| v.is_finite()));
            let g = glcm_features(&matrices::glcm(&r, mode));
            let idx = |n: &str| names::GLCM.iter().position(|x| *x == n).unwrap();
            assert_eq!(g[idx("Correlation")], 1.0);
            assert_eq!(g[idx("MCC")], 1.0);
            assert_eq!(g[idx("JointEntropy")], 0.0);
            assert_eq!(g[idx("Imc1")], 0.0);
            assert_eq!(g[idx("SumSquares")], 0.0);
        }
    }

    #[test]
    fn two_level_glcm_by_hand() {
        // Pair (1,2) once, symmetric: p = [[0, .5], [.5, 0]].
        let g = glcm_features(&matrices::glcm(&roi([2, 1, 1], vec![1, 2]), ExtractionMode::Force2D));
        assert_eq!(g[4], 1.0); // contrast
        assert_eq!(g[5], -1.0); // correlation
        assert_eq!(g[16], 1.5); // joint average
        assert_eq!(g[18], 1.0); // joint entropy
        assert!((g[19] - 1.0).abs() < 1e-12); // MCC of a permutation
    }

    #[test]
    fn ngtdm_two_voxels() {
        let m = matrices::ngtdm(&roi([2, 1, 1], vec![1, 3]), ExtractionMode::Force2D);
        let [busy, coarse, _complex, contrast, strength] = ngtdm_features(&m);
        // s = [2, 0, 2], p = [.5, 0, .5]
        assert_eq!(coarse, 0.5);
        assert_eq!(busy, 2.0 / 2.0);
        assert_eq!(contrast, (2.0 * 0.25 * 4.0) / 2.0 * 4.0 / 2.0);
        assert_eq!(strength, (2.0 * 1.0 * 4.0) / 4.0);
    }
}
