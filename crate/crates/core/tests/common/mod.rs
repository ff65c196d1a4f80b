//! Brute-force reference implementations used by several test targets.
//!
//! Everything here works on explicit voxel lists and pairwise adjacency tests
//! rather than offsets and scans, and evaluates every feature as a plain
//! double sum over a dense matrix.

#![allow(dead_code)]

use nalgebra::DMatrix;
use radrobust::features::{DiscreteRoi, ExtractionMode};

pub struct Voxel {
    pub p: [i64; 3],
    pub g: usize,
}

pub fn roi_voxels(roi: &DiscreteRoi) -> Vec<Voxel> {
    let [nx, ny, nz] = roi.dims;
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let g = roi.levels[x + nx * (y + ny * z)];
                if g > 0 {
                    out.push(Voxel { p: [x as i64, y as i64, z as i64], g: g as usize });
                }
            }
        }
    }
    out
}

pub fn adjacent(a: [i64; 3], b: [i64; 3], mode: ExtractionMode) -> bool {
    let d = [0, 1, 2].map(|k| (a[k] - b[k]).abs());
    let cheb = d.iter().copied().max().unwrap();
    cheb == 1 && (mode == ExtractionMode::Full3D || d[2] == 0)
}

fn half_directions(mode: ExtractionMode) -> Vec<[i64; 3]> {
    let mut out = Vec::new();
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                let d = [dx, dy, dz];
                if d == [0, 0, 0] || (mode == ExtractionMode::Force2D && dz != 0) {
                    continue;
                }
                // keep d if it is lexicographically "positive" on (x, y, z) read from x
                let first = d.iter().copied().find(|&v| v != 0).unwrap();
                if first > 0 {
                    out.push(d);
                }
            }
        }
    }
    out
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

pub fn glcm_matrix(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<Vec<f64>> {
    let ng = roi.n_levels as usize;
    let v = roi_voxels(roi);
    let mut m = vec![vec![0.0; ng + 1]; ng + 1];
    for a in &v {
        for b in &v {
            if adjacent(a.p, b.p, mode) {
                m[a.g][b.g] += 1.0;
            }
        }
    }
    m
}

fn level_at(v: &[Voxel], p: [i64; 3]) -> usize {
    v.iter().find(|w| w.p == p).map(|w| w.g).unwrap_or(0)
}

pub fn glrlm_matrix(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<Vec<f64>> {
    let ng = roi.n_levels as usize;
    let v = roi_voxels(roi);
    let maxlen = *roi.dims.iter().max().unwrap();
    let mut m = vec![vec![0.0; maxlen + 1]; ng + 1];
    for d in half_directions(mode) {
        for a in &v {
            for len in 1..=maxlen {
                let at = |k: i64| level_at(&v, [a.p[0] + k * d[0], a.p[1] + k * d[1], a.p[2] + k * d[2]]);
                let body = (0..len as i64).all(|k| at(k) == a.g);
                if body && at(-1) != a.g && at(len as i64) != a.g {
                    m[a.g][len] += 1.0;
                }
            }
        }
    }
    m
}

pub fn glszm_matrix(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<Vec<f64>> {
    let ng = roi.n_levels as usize;
    let v = roi_voxels(roi);
    let mut label: Vec<usize> = (0..v.len()).collect();
    loop {
        let mut changed = false;
        for a in 0..v.len() {
            for b in 0..v.len() {
                if v[a].g == v[b].g && adjacent(v[a].p, v[b].p, mode) && label[b] < label[a] {
                    label[a] = label[b];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut m = vec![vec![0.0; v.len() + 1]; ng + 1];
    for root in 0..v.len() {
        let size = label.iter().filter(|&&l| l == root).count();
        if size > 0 {
            m[v[root].g][size] += 1.0;
        }
    }
    m
}

pub fn gldm_matrix(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<Vec<f64>> {
    let ng = roi.n_levels as usize;
    let v = roi_voxels(roi);
    let mut m = vec![vec![0.0; 28]; ng + 1];
    for a in &v {
        let same = v.iter().filter(|b| b.g == a.g && adjacent(a.p, b.p, mode)).count();
        m[a.g][same + 1] += 1.0;
    }
    m
}

/// `(n_i, s_i)` for levels `0..=Ng` (index 0 unused).
pub fn ngtdm_vectors(roi: &DiscreteRoi, mode: ExtractionMode) -> (Vec<f64>, Vec<f64>) {
    let ng = roi.n_levels as usize;
    let v = roi_voxels(roi);
    let (mut n, mut s) = (vec![0.0; ng + 1], vec![0.0; ng + 1]);
    for a in &v {
        let nb: Vec<f64> = v.iter().filter(|b| adjacent(a.p, b.p, mode)).map(|b| b.g as f64).collect();
        if !nb.is_empty() {
            let mean = nb.iter().sum::<f64>() / nb.len() as f64;
            n[a.g] += 1.0;
            s[a.g] += (a.g as f64 - mean).abs();
        }
    }
    (n, s)
}

pub fn glcm_features(m: &[Vec<f64>], ng: usize) -> Vec<f64> {
    let total: f64 = m.iter().flatten().sum();
    if total == 0.0 {
        return vec![0.0; 24];
    }
    let p = |i: usize, j: usize| m[i][j] / total;
    let r = 1..=ng;
    let (mut px, mut py) = (vec![0.0; ng + 1], vec![0.0; ng + 1]);
    for i in r.clone() {
        for j in r.clone() {
            px[i] += p(i, j);
            py[j] += p(i, j);
        }
    }
    let sum2 = |f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 1..=ng {
            for j in 1..=ng {
                s += f(i as f64, j as f64, p(i, j));
            }
        }
        s
    };
    let mux = sum2(&|i, _, v| i * v);
    let muy = sum2(&|_, j, v| j * v);
    let sx = sum2(&|i, _, v| (i - mux).powi(2) * v).sqrt();
    let sy = sum2(&|_, j, v| (j - muy).powi(2) * v).sqrt();
    let autoc = sum2(&|i, j, v| i * j * v);
    let corr = if sx * sy == 0.0 { 1.0 } else { (autoc - mux * muy) / (sx * sy) };

    let mut pd = vec![0.0; ng];
    let mut ps = vec![0.0; 2 * ng + 1];
    for i in r.clone() {
        for j in r.clone() {
            pd[i.abs_diff(j)] += p(i, j);
            ps[i + j] += p(i, j);
        }
    }
    let da: f64 = pd.iter().enumerate().map(|(k, v)| k as f64 * v).sum();
    let de: f64 = pd.iter().map(|&v| h(v)).sum();
    let dv: f64 = pd.iter().enumerate().map(|(k, v)| (k as f64 - da).powi(2) * v).sum();
    let ngf = ng as f64;

    let hx: f64 = px.iter().map(|&v| h(v)).sum();
    let hy: f64 = py.iter().map(|&v| h(v)).sum();
    let hxy = sum2(&|_, _, v| h(v));
    let mut hxy1 = 0.0;
    let mut hxy2 = 0.0;
    for i in r.clone() {
        for j in r.clone() {
            let q = px[i] * py[j];
            if p(i, j) > 0.0 {
                hxy1 -= p(i, j) * q.log2();
            }
            hxy2 += h(q);
        }
    }
    let imc1 = if hx.max(hy) == 0.0 { 0.0 } else { (hxy - hxy1) / hx.max(hy) };
    let imc2 = (1.0 - (-2.0 * (hxy2 - hxy)).exp()).max(0.0).sqrt();

    let present: Vec<usize> = r.clone().filter(|&i| px[i] > 0.0).collect();
    let mcc = if present.len() < 2 {
        1.0
    } else {
        let q = DMatrix::from_fn(present.len(), present.len(), |a, b| {
            let (i, j) = (present[a], present[b]);
            (1..=ng).filter(|&k| py[k] > 0.0).map(|k| p(i, k) * p(j, k) / (px[i] * py[k])).sum::<f64>()
        });
        let mut ev: Vec<f64> = q.complex_eigenvalues().iter().map(|c| c.re).collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev[1].max(0.0).sqrt()
    };
    let maxp = m.iter().flatten().fold(0.0f64, |a, &b| a.max(b)) / total;

    vec![
        autoc,
        sum2(&|i, j, v| (i + j - mux - muy).powi(4) * v),
        sum2(&|i, j, v| (i + j - mux - muy).powi(3) * v),
        sum2(&|i, j, v| (i + j - mux - muy).powi(2) * v),
        sum2(&|i, j, v| (i - j).powi(2) * v),
        corr,
        da,
        de,
        dv,
        sum2(&|i, j, v| v / (1.0 + (i - j).abs())),
        sum2(&|i, j, v| v / (1.0 + (i - j).powi(2))),
        sum2(&|i, j, v| v / (1.0 + (i - j).powi(2) / (ngf * ngf))),
        sum2(&|i, j, v| v / (1.0 + (i - j).abs() / ngf)),
        imc1,
        imc2,
        sum2(&|i, j, v| if i != j { v / (i - j).powi(2) } else { 0.0 }),
        mux,
        sum2(&|_, _, v| v * v),
        hxy,
        mcc,
        maxp,
        sum2(&|i, j, v| (i + j) * v),
        ps.iter().map(|&v| h(v)).sum(),
        sum2(&|i, _, v| (i - mux).powi(2) * v),
    ]
}

/// Sums used by the run-length, size-zone and dependence features.
struct Sums {
    n: f64,
    f: Box<dyn Fn(&dyn Fn(f64, f64) -> f64) -> f64>,
    gln: f64,
    jn: f64,
    gv: f64,
    jv: f64,
    ent: f64,
}

fn sums(m: &[Vec<f64>]) -> Option<Sums> {
    let n: f64 = m.iter().flatten().sum();
    if n == 0.0 {
        return None;
    }
    let owned: Vec<Vec<f64>> = m.to_vec();
    let f = {
        let owned = owned.clone();
        Box::new(move |g: &dyn Fn(f64, f64) -> f64| {
            let mut s = 0.0;
            for (i, row) in owned.iter().enumerate() {
                for (j, &c) in row.iter().enumerate() {
                    if c > 0.0 {
                        s += c * g(i as f64, j as f64);
                    }
                }
            }
            s / n
        })
    };
    let gln = owned.iter().map(|row| row.iter().sum::<f64>().powi(2)).sum::<f64>() / n;
    let width = owned.iter().map(|r| r.len()).max().unwrap();
    let jn = (0..width).map(|j| owned.iter().map(|row| row.get(j).copied().unwrap_or(0.0)).sum::<f64>().powi(2)).sum::<f64>() / n;
    let mi = f(&|i, _| i);
    let mj = f(&|_, j| j);
    let gv = f(&|i, _| (i - mi).powi(2));
    let jv = f(&|_, j| (j - mj).powi(2));
    let ent = owned.iter().flatten().map(|&c| h(c / n)).sum();
    Some(Sums { n, f, gln, jn, gv, jv, ent })
}

pub fn run_zone_features(m: &[Vec<f64>], n_p: f64) -> Vec<f64> {
    let Some(s) = sums(m) else { return vec![0.0; 16] };
    let f = &s.f;
    vec![
        s.gln,
        s.gln / s.n,
        s.gv,
        f(&|i, _| i * i),
        f(&|_, j| j * j),
        f(&|i, j| i * i * j * j),
        f(&|i, j| j * j / (i * i)),
        f(&|i, _| 1.0 / (i * i)),
        s.ent,
        s.jn,
        s.jn / s.n,
        s.n / n_p,
        s.jv,
        f(&|_, j| 1.0 / (j * j)),
        f(&|i, j| i * i / (j * j)),
        f(&|i, j| 1.0 / (i * i * j * j)),
    ]
}

pub fn gldm_features(m: &[Vec<f64>]) -> Vec<f64> {
    let Some(s) = sums(m) else { return vec![0.0; 14] };
    let f = &s.f;
    vec![
        s.ent,
        s.jn,
        s.jn / s.n,
        s.jv,
        s.gln,
        s.gv,
        f(&|i, _| i * i),
        f(&|_, j| j * j),
        f(&|i, j| i * i * j * j),
        f(&|i, j| j * j / (i * i)),
        f(&|i, _| 1.0 / (i * i)),
        f(&|_, j| 1.0 / (j * j)),
        f(&|i, j| i * i / (j * j)),
        f(&|i, j| 1.0 / (i * i * j * j)),
    ]
}

pub fn ngtdm_features(n: &[f64], s: &[f64]) -> Vec<f64> {
    let nvp: f64 = n.iter().sum();
    if nvp == 0.0 {
        return vec![0.0, 1e6, 0.0, 0.0, 0.0];
    }
    let p: Vec<f64> = n.iter().map(|v| v / nvp).collect();
    let lv: Vec<usize> = (1..n.len()).filter(|&i| p[i] > 0.0).collect();
    let ngp = lv.len() as f64;
    let ps: f64 = lv.iter().map(|&i| p[i] * s[i]).sum();
    let st: f64 = lv.iter().map(|&i| s[i]).sum();
    let pair = |f: &dyn Fn(f64, f64, f64, f64, f64, f64) -> f64| -> f64 {
        let mut t = 0.0;
        for &i in &lv {
            for &j in &lv {
                t += f(i as f64, j as f64, p[i], p[j], s[i], s[j]);
            }
        }
        t
    };
    let busy_den = pair(&|i, j, pi, pj, _, _| (i * pi - j * pj).abs());
    vec![
        if busy_den == 0.0 { 0.0 } else { ps / busy_den },
        if ps == 0.0 { 1e6 } else { 1.0 / ps },
        pair(&|i, j, pi, pj, si, sj| (i - j).abs() * (pi * si + pj * sj) / (pi + pj)) / nvp,
        if ngp < 2.0 { 0.0 } else { pair(&|i, j, pi, pj, _, _| pi * pj * (i - j).powi(2)) / (ngp * (ngp - 1.0)) * st / nvp },
        if st == 0.0 { 0.0 } else { pair(&|i, j, pi, pj, _, _| (pi + pj) * (i - j).powi(2)) / st },
    ]
}

/// Every texture feature in output order (GLCM, GLRLM, GLSZM, NGTDM, GLDM).
pub fn texture_features(roi: &DiscreteRoi, mode: ExtractionMode) -> Vec<f64> {
    let ng = roi.n_levels as usize;
    let mut out = glcm_features(&glcm_matrix(roi, mode), ng);
    let rl = glrlm_matrix(roi, mode);
    let n_p: f64 = rl.iter().flat_map(|row| row.iter().enumerate().map(|(j, c)| j as f64 * c)).sum();
    out.extend(run_zone_features(&rl, n_p));
    out.extend(run_zone_features(&glszm_matrix(roi, mode), roi_voxels(roi).len() as f64));
    let (n, s) = ngtdm_vectors(roi, mode);
    out.extend(ngtdm_features(&n, &s));
    out.extend(gldm_features(&gldm_matrix(roi, mode)));
    out
}

/// Relative comparison with a tiny absolute floor for values near zero.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) + 1e-12
}

/// ICC(2,1) straight from the mean squares of a two-way layout.
pub fn icc21(data: &[Vec<f64>]) -> f64 {
    let n = data.len() as f64;
    let k = data[0].len() as f64;
    let grand = data.iter().flatten().sum::<f64>() / (n * k);
    let row_means: Vec<f64> = data.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let col_means: Vec<f64> = (0..data[0].len()).map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let msr = k * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n - 1.0);
    let msc = n * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (k - 1.0);
    let mut sse = 0.0;
    for (i, r) in data.iter().enumerate() {
        for (j, &x) in r.iter().enumerate() {
            sse += (x - row_means[i] - col_means[j] + grand).powi(2);
        }
    }
    let mse = sse / ((n - 1.0) * (k - 1.0));
    (msr - mse) / (msr + (k - 1.0) * mse + k * (msc - mse) / n)
}
