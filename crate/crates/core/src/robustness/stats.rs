use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Why an estimate took its fallback value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Every rating equal: agreement is trivially perfect (ICC 1).
    DegenerateVariance,
    /// Zero ICC denominator without all ratings equal (ICC 0).
    DegenerateDesign,
    /// Both series constant up to rounding (CCC 1 if equal, else 0).
    BothConstant,
    /// Spearman with a constant series (0).
    ConstantSeries,
    /// |CCC| = 1: the interval collapses to the point.
    DegenerateCcc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub flag: Option<Flag>,
}

impl Estimate {
    fn plain(value: f64) -> Self {
        Estimate { value, flag: None }
    }

    fn flagged(value: f64, flag: Flag) -> Self {
        Estimate { value, flag: Some(flag) }
    }
}

/// `n` ROIs (rows) rated by `k` acquisitions (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    rows: Vec<Vec<f64>>,
}

impl RatingsMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n < 2 || k < 2 {
            return Err(Error::TooFewSamples { needed: 2, got: n.min(k) });
        }
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("ratings", "ragged rows"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("ratings", "non-finite value"));
        }
        Ok(RatingsMatrix { rows })
    }

    /// Two columns.
    pub fn from_pair(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::invalid("ratings", "columns differ in length"));
        }
        Self::new(a.iter().zip(b).map(|(&x, &y)| vec![x, y]).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// ICC(2,1): two-way random effects, absolute agreement, single measurement.
pub fn icc21(m: &RatingsMatrix) -> Estimate {
    let rows = &m.rows;
    let n = rows.len() as f64;
    let k = rows[0].len() as f64;
    let grand = rows.iter().flatten().sum::<f64>() / (n * k);
    let row_mean: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k).collect();
    let col_mean: Vec<f64> = (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();

    let ss_r = k * row_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_c = n * col_mean.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_e = 0.0;
    for (r, row) in rows.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            ss_e += (x - row_mean[r] - col_mean[c] + grand).powi(2);
        }
    }
    let ms_r = ss_r / (n - 1.0);
    let ms_c = ss_c / (k - 1.0);
    let ms_e = ss_e / ((n - 1.0) * (k - 1.0));

    if rows.iter().flatten().all(|&v| v == rows[0][0]) {
        return Estimate::flagged(1.0, Flag::DegenerateVariance);
    }
    // Raters agree exactly: the error and rater mean squares vanish, but
    // rounding in them would dominate when the row spread is tiny.
    if rows.iter().all(|r| r.iter().all(|&v| v == r[0])) {
        return Estimate::plain(1.0);
    }
    let den = ms_r + (k - 1.0) * ms_e + k / n * (ms_c - ms_e);
    if !(den > 0.0) {
        return Estimate::flagged(0.0, Flag::DegenerateDesign);
    }
    Estimate::plain((ms_r - ms_e) / den)
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::invalid("paired series", format!("lengths {} and {} differ", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::TooFewSamples { needed: min, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("paired series", "non-finite value"));
    }
    Ok(())
}

struct Moments {
    mx: f64,
    my: f64,
    vx: f64,
    vy: f64,
    cov: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    Moments { mx, my, vx, vy, cov }
}

const CONSTANT_REL: f64 = 1e-10;

/// Lin's concordance correlation coefficient with population moments.
pub fn ccc(x: &[f64], y: &[f64]) -> Result<Estimate> {
    check_pair(x, y, 3)?;
    let m = moments(x, y);
    // Spread below rounding level relative to the values counts as constant.
    let tol = CONSTANT_REL * x.iter().chain(y).fold(0.0f64, |a, v| a.max(v.abs()));
    if m.vx.sqrt() <= tol && m.vy.sqrt() <= tol {
        let equal = x.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol);
        return Ok(Estimate::flagged(if equal { 1.0 } else { 0.0 }, Flag::BothConstant));
    }
    if x == y {
        return Ok(Estimate::plain(1.0));
    }
    Ok(Estimate::plain(2.0 * m.cov / (m.vx + m.vy + (m.mx - m.my).powi(2))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CccInterval {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub flag: Option<Flag>,
}

/// CCC with a Fisher-z confidence interval using Lin's asymptotic variance
/// of `atanh(CCC)`.
pub fn ccc_ci(x: &[f64], y: &[f64], level: f64) -> Result<CccInterval> {
    check_pair(x, y, 4)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level", format!("must lie in (0, 1), got {level}")));
    }
    let est = ccc(x, y)?;
    let rc = est.value;
    if est.flag.is_some() || rc.abs() >= 1.0 {
        return Ok(CccInterval { value: rc, lo: rc, hi: rc, flag: Some(est.flag.unwrap_or(Flag::DegenerateCcc)) });
    }
    let m = moments(x, y);
    let n = x.len() as f64;
    let sxy = (m.vx * m.vy).sqrt();
    // C = ρc / r (the bias correction factor), well defined when r = 0.
    let c = 2.0 * sxy / (m.vx + m.vy + (m.mx - m.my).powi(2));
    let r = if sxy > 0.0 { m.cov / sxy } else { 0.0 };
    let u2 = if sxy > 0.0 { (m.mx - m.my).powi(2) / sxy } else { 0.0 };
    let one = 1.0 - rc * rc;
    let var_z = ((1.0 - r * r) * c * c / one + 2.0 * c.powi(3) * r * r * (1.0 - rc) * u2 / (one * one)
        - c.powi(4) * r * r * u2 * u2 / (2.0 * one * one))
        / (n - 2.0);
    let q = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + level / 2.0);
    let z = rc.atanh();
    let half = q * var_z.max(0.0).sqrt();
    Ok(CccInterval { value: rc, lo: (z - half).tanh(), hi: (z + half).tanh(), flag: None })
}

/// Mid-ranks (1-based), ties averaged.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation with population moments; `None` if a series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let m = moments(x, y);
    (m.vx > 0.0 && m.vy > 0.0).then(|| (m.cov / (m.vx * m.vy).sqrt()).clamp(-1.0, 1.0))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<Estimate> {
    check_pair(x, y, 3)?;
    Ok(match pearson(&mid_ranks(x), &mid_ranks(y)) {
        Some(r) => Estimate::plain(r),
        None => Estimate::flagged(0.0, Flag::ConstantSeries),
    })
}

/// `(μ_A − μ_B) / σ_air`.
pub fn cnr(mean_a: f64, mean_b: f64, sigma_air: f64) -> Result<f64> {
    if !(sigma_air > 0.0) {
        return Err(Error::ZeroNoise);
    }
    Ok((mean_a - mean_b) / sigma_air)
}

/// `μ_A / σ_air`.
pub fn snr(mean_a: f64, sigma_air: f64) -> Result<f64> {
    if !(sigma_air > 0.0) {
        return Err(Error::ZeroNoise);
    }
    Ok(mean_a / sigma_air)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icc_hand_anova() {
        let m = RatingsMatrix::new(vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert!((icc21(&m).value - 8.0 / 9.0).abs() < 1e-12);
        let same = RatingsMatrix::from_pair(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((icc21(&same).value - 1.0).abs() < 1e-12);
        let flat = RatingsMatrix::from_pair(&[4.0; 3], &[4.0; 3]).unwrap();
        assert_eq!(icc21(&flat), Estimate { value: 1.0, flag: Some(Flag::DegenerateVariance) });
        let swap = RatingsMatrix::from_pair(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert_eq!(icc21(&swap).flag, Some(Flag::DegenerateDesign));
        assert!(RatingsMatrix::new(vec![vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn icc_exact_agreement_with_tiny_spread() {
        let x = [10.0, 10.000000000000002];
        assert_eq!(icc21(&RatingsMatrix::from_pair(&x, &x).unwrap()), Estimate::plain(1.0));
    }

    #[test]
    fn ccc_examples() {
        assert!((ccc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap().value - 4.0 / 11.0).abs() < 1e-12);
        assert_eq!(ccc(&[1.0, 5.0, 2.0], &[1.0, 5.0, 2.0]).unwrap().value, 1.0);
        assert!(ccc(&[1.0, 5.0, 2.0], &[-1.0, -5.0, -2.0]).unwrap().value < 0.0);
        assert_eq!(ccc(&[2.0; 3], &[2.0; 3]).unwrap(), Estimate { value: 1.0, flag: Some(Flag::BothConstant) });
        assert_eq!(ccc(&[2.0; 3], &[3.0; 3]).unwrap().value, 0.0);
        assert!(ccc(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn ccc_rounding_spread_counts_as_constant() {
        let x = [300.0, 300.0 + 1e-13, 300.0 - 2e-13];
        let y = [300.0 - 1e-13, 300.0, 300.0 + 1e-13];
        assert_eq!(ccc(&x, &y).unwrap(), Estimate { value: 1.0, flag: Some(Flag::BothConstant) });
        assert_eq!(ccc(&x, &[301.0; 3]).unwrap().value, 0.0);
        assert!(ccc(&[300.0, 300.001, 300.002], &[300.0, 300.001, 300.002]).unwrap().flag.is_none());
    }

    #[test]
    fn ccc_interval_brackets_estimate() {
        let x: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.01 } else { -0.01 }).collect();
        let ci = ccc_ci(&x, &y, 0.95).unwrap();
        assert!(ci.lo <= ci.value && ci.value <= ci.hi && ci.hi <= 1.0 && ci.hi > 0.9);
        let d = ccc_ci(&x, &x, 0.95).unwrap();
        assert_eq!((d.lo, d.hi, d.flag), (1.0, 1.0, Some(Flag::DegenerateCcc)));
        assert!(matches!(ccc_ci(&x[..3], &y[..3], 0.95), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap().value, 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap().value, -1.0);
        assert_eq!(mid_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        // mid-ranks (1, 2.5, 2.5, 4) vs (1, 3, 2, 4): cov 1.125 / sqrt(1.125 · 1.25)
        let s = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().value;
        assert!((s - 1.125 / (1.125f64 * 1.25).sqrt()).abs() < 1e-12);
        assert_eq!(spearman(&[1.0; 3], &[1.0, 2.0, 3.0]).unwrap().flag, Some(Flag::ConstantSeries));
    }

    #[test]
    fn cnr_snr() {
        assert_eq!(cnr(500.0, 300.0, 10.0).unwrap(), 20.0);
        assert_eq!(cnr(3.0, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(snr(500.0, 10.0).unwrap(), 50.0);
        assert!(matches!(cnr(1.0, 0.0, 0.0), Err(Error::ZeroNoise)));
        assert!(snr(500.0, 10.0).unwrap() >= cnr(500.0, 300.0, 10.0).unwrap());
    }
}
