use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Scenario;
use crate::error::{Error, Result};
use crate::features::{compute_features, ExtractionConfig, FeatureClass, FeatureKey, FeatureTable};
use crate::imageio::{ImageVolume, RoiMask};
use crate::robustness::{ccc_records, icc_records, icc21, shuffle_intensities, spearman, MetricRecord, RatingsMatrix, StabilityClass};

/// Features per stability class, with percentages rounded to one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub excellent: usize,
    pub good: usize,
    pub moderate: usize,
    pub poor: usize,
    pub total: usize,
    pub excellent_pct: f64,
    pub good_pct: f64,
    pub moderate_pct: f64,
    pub poor_pct: f64,
}

pub(crate) fn pct(n: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    (1000.0 * n as f64 / total as f64).round() / 10.0
}

impl ClassCounts {
    pub fn from_classes(classes: impl IntoIterator<Item = StabilityClass>) -> Self {
        let mut n = [0usize; 4];
        for c in classes {
            n[c as usize] += 1;
        }
        let [poor, moderate, good, excellent] = n;
        let total = n.iter().sum();
        ClassCounts {
            excellent,
            good,
            moderate,
            poor,
            total,
            excellent_pct: pct(excellent, total),
            good_pct: pct(good, total),
            moderate_pct: pct(moderate, total),
            poor_pct: pct(poor, total),
        }
    }

    pub fn get(&self, class: StabilityClass) -> usize {
        match class {
            StabilityClass::Excellent => self.excellent,
            StabilityClass::Good => self.good,
            StabilityClass::Moderate => self.moderate,
            StabilityClass::Poor => self.poor,
        }
    }

    /// Unrounded share of Excellent features.
    pub fn excellent_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.excellent as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub scenario: Scenario,
    pub label: String,
    /// Acquisition or input names compared, in order.
    pub conditions: Vec<String>,
    pub n_rois: usize,
    pub counts: ClassCounts,
    /// Excellent features in canonical key order.
    pub excellent: Vec<FeatureKey>,
    pub records: Vec<MetricRecord>,
}

impl StabilityReport {
    pub fn from_records(scenario: Scenario, label: impl Into<String>, conditions: Vec<String>, n_rois: usize, records: Vec<MetricRecord>) -> Self {
        let counts = ClassCounts::from_classes(records.iter().map(|r| r.class));
        let excellent = records.iter().filter(|r| r.class == StabilityClass::Excellent).map(|r| r.key.clone()).collect();
        StabilityReport { scenario, label: label.into(), conditions, n_rois, counts, excellent, records }
    }

    pub fn keys(&self) -> impl Iterator<Item = &FeatureKey> {
        self.records.iter().map(|r| &r.key)
    }

    pub fn mean_value(&self) -> f64 {
        self.records.iter().map(|r| r.value).sum::<f64>() / self.records.len().max(1) as f64
    }
}

/// ICC(2,1) per feature with the tables as raters.
pub fn repeatability_report(scenario: Scenario, label: &str, tables: &[(&str, &FeatureTable)]) -> Result<StabilityReport> {
    let t: Vec<&FeatureTable> = tables.iter().map(|(_, t)| *t).collect();
    let records = icc_records(&t)?;
    let names = tables.iter().map(|(n, _)| n.to_string()).collect();
    Ok(StabilityReport::from_records(scenario, label, names, t[0].roi_ids.len(), records))
}

/// CCC per feature between two conditions.
pub fn reproducibility_report(scenario: Scenario, label: &str, a: (&str, &FeatureTable), b: (&str, &FeatureTable), level: f64) -> Result<StabilityReport> {
    let records = ccc_records(a.1, b.1, level)?;
    Ok(StabilityReport::from_records(scenario, label, vec![a.0.into(), b.0.into()], a.1.roi_ids.len(), records))
}

/// Non-shape features whose |Spearman| across ROIs exceeds `threshold`
/// against at least one of the 14 original-image shape features.
pub fn shape_screen(table: &FeatureTable, threshold: f64) -> Result<Vec<FeatureKey>> {
    let mut shape = Vec::new();
    let mut missing = Vec::new();
    for name in FeatureClass::Shape.names() {
        match table.column_by_key(&FeatureKey::new("original", FeatureClass::Shape, *name)) {
            Some(c) => shape.push(c),
            None => missing.push(*name),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingShapeColumns(missing.join(", ")));
    }
    let flagged: Vec<Option<FeatureKey>> = (0..table.n_features())
        .into_par_iter()
        .map(|f| {
            let key = &table.keys[f];
            if key.class == FeatureClass::Shape {
                return Ok(None);
            }
            let col = table.column(f);
            for s in &shape {
                if spearman(&col, s)?.value.abs() > threshold {
                    return Ok(Some(key.clone()));
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    Ok(flagged.into_iter().flatten().collect())
}

/// Non-shape features whose ICC between original and shuffled-image values
/// exceeds `threshold`, i.e. features blind to spatial arrangement.
pub fn shuffle_screen(original: &FeatureTable, shuffled: &FeatureTable, threshold: f64) -> Result<Vec<FeatureKey>> {
    crate::robustness::check_aligned(&[original, shuffled])?;
    let flagged: Vec<Option<FeatureKey>> = (0..original.n_features())
        .into_par_iter()
        .map(|f| {
            let key = &original.keys[f];
            if key.class == FeatureClass::Shape {
                return Ok(None);
            }
            let m = RatingsMatrix::from_pair(&original.column(f), &shuffled.column(f))?;
            Ok((icc21(&m).value > threshold).then(|| key.clone()))
        })
        .collect::<Result<_>>()?;
    Ok(flagged.into_iter().flatten().collect())
}

/// Extracts features from each image and from its seeded shuffle, returning
/// the keys flagged on every input.
pub fn run_shuffle_screen(inputs: &[(&ImageVolume, &RoiMask)], config: &ExtractionConfig, seed: u64, threshold: f64) -> Result<Vec<FeatureKey>> {
    if inputs.is_empty() {
        return Err(Error::invalid("shuffle screen", "no inputs"));
    }
    let mut sets = Vec::new();
    for (i, (image, mask)) in inputs.iter().enumerate() {
        let original = compute_features(image, mask, config)?;
        let shuffled = compute_features(&shuffle_intensities(image, super::derive_seed(seed, &format!("shuffle{i}"))), mask, config)?;
        sets.push(shuffle_screen(&original, &shuffled, threshold)?);
    }
    Ok(intersect(&sets))
}

/// Keys present in every list, in the order of the first.
pub fn intersect(sets: &[Vec<FeatureKey>]) -> Vec<FeatureKey> {
    let Some(first) = sets.first() else { return Vec::new() };
    let rest: Vec<BTreeSet<String>> = sets[1..].iter().map(|s| s.iter().map(|k| k.to_string()).collect()).collect();
    first.iter().filter(|k| rest.iter().all(|r| r.contains(&k.to_string()))).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    pub sources: Vec<String>,
    pub shape_correlated: Vec<FeatureKey>,
    pub shuffle_flagged: Vec<FeatureKey>,
    /// Both shape-correlated and shuffle-flagged.
    pub excluded: Vec<FeatureKey>,
}

impl ScreenReport {
    pub fn new(sources: Vec<String>, shape_correlated: Vec<FeatureKey>, shuffle_flagged: Vec<FeatureKey>) -> Self {
        let excluded = intersect(&[shape_correlated.clone(), shuffle_flagged.clone()]);
        ScreenReport { sources, shape_correlated, shuffle_flagged, excluded }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSet {
    pub universe: usize,
    /// Labels of the reports intersected, sorted.
    pub reports: Vec<String>,
    pub excellent_everywhere: usize,
    pub excluded: Vec<FeatureKey>,
    pub with_shape: Vec<FeatureKey>,
    pub without_shape: Vec<FeatureKey>,
}

/// Features Excellent in every report, minus the keys flagged by both
/// screens. The result does not depend on the order of `reports`.
pub fn compose_robust_set(reports: &[&StabilityReport], shape_correlated: &[FeatureKey], shuffle_flagged: &[FeatureKey]) -> Result<RobustSet> {
    let first = reports.first().ok_or(Error::EmptyUniverse)?;
    if first.records.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    let universe: Vec<&FeatureKey> = first.keys().collect();
    for r in &reports[1..] {
        if !r.keys().eq(universe.iter().copied()) {
            return Err(Error::invalid("reports", format!("{:?} and {:?} cover different features", first.label, r.label)));
        }
    }
    let excellent: Vec<Vec<bool>> = reports.iter().map(|r| r.records.iter().map(|x| x.class == StabilityClass::Excellent).collect()).collect();
    let excluded = intersect(&[shape_correlated.to_vec(), shuffle_flagged.to_vec()]);
    let excluded_names: BTreeSet<String> = excluded.iter().map(|k| k.to_string()).collect();
    let mut everywhere = 0;
    let mut with_shape = Vec::new();
    for (i, key) in universe.iter().enumerate() {
        if excellent.iter().all(|e| e[i]) {
            everywhere += 1;
            if !excluded_names.contains(&key.to_string()) {
                with_shape.push((*key).clone());
            }
        }
    }
    let without_shape = with_shape.iter().filter(|k| k.class != FeatureClass::Shape).cloned().collect();
    let mut labels: Vec<String> = reports.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    Ok(RobustSet { universe: universe.len(), reports: labels, excellent_everywhere: everywhere, excluded, with_shape, without_shape })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeCell {
    pub te_a_ms: f64,
    pub te_b_ms: f64,
    pub gap_ms: f64,
    pub mean_ccc: f64,
    pub counts: ClassCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub gap_ms: f64,
    pub pairs: usize,
    pub mean_ccc: f64,
    pub excellent_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeGridReport {
    pub te_ms: Vec<f64>,
    pub tr_ms: f64,
    pub n_features: usize,
    /// Upper triangle, row-major: (TE_i, TE_j) for i < j.
    pub cells: Vec<TeCell>,
    pub gaps: Vec<GapSummary>,
    /// Spearman correlation of per-gap mean CCC against the gap; needs three gaps.
    pub gap_spearman: Option<f64>,
}

impl TeGridReport {
    /// Pairwise CCC over all TE combinations; `tables[i]` was acquired at `te_ms[i]`.
    pub fn compute(te_ms: &[f64], tr_ms: f64, tables: &[&FeatureTable], level: f64) -> Result<Self> {
        if te_ms.len() < 2 || te_ms.len() != tables.len() {
            return Err(Error::invalid("te grid", "need one table per TE and at least two TEs"));
        }
        let mut cells = Vec::new();
        for i in 0..te_ms.len() {
            for j in i + 1..te_ms.len() {
                let records = ccc_records(tables[i], tables[j], level)?;
                let mean = records.iter().map(|r| r.value).sum::<f64>() / records.len().max(1) as f64;
                cells.push(TeCell {
                    te_a_ms: te_ms[i],
                    te_b_ms: te_ms[j],
                    gap_ms: te_ms[j] - te_ms[i],
                    mean_ccc: mean,
                    counts: ClassCounts::from_classes(records.iter().map(|r| r.class)),
                });
            }
        }
        let mut gap_values: Vec<f64> = cells.iter().map(|c| c.gap_ms).collect();
        gap_values.sort_by(f64::total_cmp);
        gap_values.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        let gaps: Vec<GapSummary> = gap_values
            .iter()
            .map(|&g| {
                let at: Vec<&TeCell> = cells.iter().filter(|c| (c.gap_ms - g).abs() < 1e-9).collect();
                let excellent: usize = at.iter().map(|c| c.counts.excellent).sum();
                let total: usize = at.iter().map(|c| c.counts.total).sum();
                GapSummary {
                    gap_ms: g,
                    pairs: at.len(),
                    mean_ccc: at.iter().map(|c| c.mean_ccc).sum::<f64>() / at.len() as f64,
                    excellent_pct: pct(excellent, total),
                }
            })
            .collect();
        let gap_spearman = if gaps.len() >= 3 {
            let g: Vec<f64> = gaps.iter().map(|s| s.gap_ms).collect();
            let m: Vec<f64> = gaps.iter().map(|s| s.mean_ccc).collect();
            Some(spearman(&m, &g)?.value)
        } else {
            None
        };
        Ok(TeGridReport { te_ms: te_ms.to_vec(), tr_ms, n_features: tables[0].n_features(), cells, gaps, gap_spearman })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustness::{classify, Metric};

    fn table(columns: Vec<(FeatureKey, Vec<f64>)>) -> FeatureTable {
        let n = columns[0].1.len();
        FeatureTable {
            roi_ids: (1..=n as u32).collect(),
            keys: columns.iter().map(|c| c.0.clone()).collect(),
            values: (0..n).map(|r| columns.iter().map(|c| c.1[r]).collect()).collect(),
            warnings: Vec::new(),
        }
    }

    fn shape_columns(n: usize) -> Vec<(FeatureKey, Vec<f64>)> {
        FeatureClass::Shape
            .names()
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let col = (0..n).map(|r| ((r * (i + 3) * 7919) % 101) as f64).collect();
                (FeatureKey::new("original", FeatureClass::Shape, *name), col)
            })
            .collect()
    }

    #[test]
    fn shape_screen_flags_monotone_copies_only() {
        let n = 16;
        let mut cols = shape_columns(n);
        let volume = cols[FeatureClass::Shape.names().iter().position(|s| *s == "MeshVolume").unwrap()].1.clone();
        cols.push((FeatureKey::new("original", FeatureClass::Glcm, "Contrast"), volume.iter().map(|v| v.ln_1p() * 3.0).collect()));
        cols.push((FeatureKey::new("original", FeatureClass::Glcm, "Id"), (0..n).map(|r| if r % 2 == 0 { 1.0 } else { -1.0 } * r as f64).collect()));
        let flagged = shape_screen(&table(cols), 0.8).unwrap();
        assert_eq!(flagged, vec![FeatureKey::new("original", FeatureClass::Glcm, "Contrast")]);
    }

    #[test]
    fn shape_screen_needs_all_shape_columns() {
        let mut cols = shape_columns(16);
        cols.remove(3);
        assert!(matches!(shape_screen(&table(cols), 0.8), Err(Error::MissingShapeColumns(_))));
    }

    #[test]
    fn shuffle_screen_flags_voxel_count_like_columns() {
        let n = 16;
        let count: Vec<f64> = (0..n).map(|r| 100.0 + 13.0 * r as f64).collect();
        let key = FeatureKey::new("original", FeatureClass::FirstOrder, "TotalEnergy");
        let texture = FeatureKey::new("original", FeatureClass::Glcm, "Contrast");
        let mut cols = shape_columns(n);
        cols.push((key.clone(), count.clone()));
        cols.push((texture.clone(), (0..n).map(|r| r as f64).collect()));
        let a = table(cols.clone());
        cols.last_mut().unwrap().1 = (0..n).map(|r| ((r * 5) % 16) as f64).collect();
        let b = table(cols);
        assert_eq!(shuffle_screen(&a, &b, 0.9).unwrap(), vec![key]);
    }

    fn report(label: &str, keys: &[FeatureKey], values: &[f64]) -> StabilityReport {
        let records = keys
            .iter()
            .zip(values)
            .map(|(k, &v)| MetricRecord { key: k.clone(), metric: Metric::Icc, value: v, ci_lo: None, ci_hi: None, class: classify(v), flag: None })
            .collect();
        StabilityReport::from_records(Scenario::RepeatabilityFixed, label, vec![], 16, records)
    }

    #[test]
    fn robust_set_is_an_order_free_intersection() {
        let keys: Vec<FeatureKey> = ["Contrast", "Id", "Idm"].iter().map(|n| FeatureKey::new("original", FeatureClass::Glcm, *n)).collect();
        let a = report("a", &keys, &[0.95, 0.99, 0.2]);
        let b = report("b", &keys, &[0.97, 0.91, 0.99]);
        let one = compose_robust_set(&[&a, &b], &[], &[]).unwrap();
        let two = compose_robust_set(&[&b, &a], &[], &[]).unwrap();
        assert_eq!(one, two);
        assert_eq!(one.with_shape, keys[..2].to_vec());
        let screened = compose_robust_set(&[&a, &b], &keys[..1], &keys[..1]).unwrap();
        assert_eq!(screened.with_shape, keys[1..2].to_vec());
        let only_one = compose_robust_set(&[&a, &b], &keys[..1], &[]).unwrap();
        assert_eq!(only_one.with_shape, one.with_shape);
        let poor = report("c", &keys, &[0.1, 0.1, 0.1]);
        assert!(compose_robust_set(&[&a, &poor], &[], &[]).unwrap().with_shape.is_empty());
        assert!(matches!(compose_robust_set(&[], &[], &[]), Err(Error::EmptyUniverse)));
    }

    #[test]
    fn counts_sum_and_round() {
        let c = ClassCounts::from_classes([StabilityClass::Excellent, StabilityClass::Excellent, StabilityClass::Poor]);
        assert_eq!(c.excellent + c.good + c.moderate + c.poor, c.total);
        assert_eq!(c.excellent_pct, 66.7);
        assert_eq!(c.poor_pct, 33.3);
    }
}
