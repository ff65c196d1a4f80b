use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::*;
use super::{derive_seed, ExperimentPlan, Scenario, StudyConfig};
use crate::error::{Error, Result};
use crate::features::{compute_features, mean_std, FeatureTable};
use crate::imageio::{read_nifti, read_nifti_mask, transform_mask, ImageVolume, RigidTransform, RoiMask};
use crate::phantom::{generate_roi_masks, quality_regions, simulate_t2w, Phantom, QualityRegions, SequenceParams};
use crate::robustness::{cnr, shuffle_intensities, snr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pose {
    Base,
    Repositioned,
}

/// One simulated acquisition: a setup, possibly with TE/TR replaced, at a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionSpec {
    pub setup: String,
    pub tag: String,
    pub sequence: SequenceParams,
    pub pose: Pose,
}

impl AcquisitionSpec {
    pub fn label(&self) -> String {
        format!("{}_{}", self.setup, self.tag)
    }

    /// Acquisitions sharing this key share a material map and ROI mask.
    fn scene_key(&self) -> String {
        let s = &self.sequence;
        format!(
            "{}|{:?}|{}|{}|{:?}|{:?}|{:?}",
            self.setup, self.pose, s.slice_thickness_mm, s.slice_spacing_mm, s.pixel_spacing_mm, s.fov_mm, s.mode
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityRecord {
    pub acquisition: String,
    pub cnr: f64,
    /// On the z-scored image.
    pub snr: f64,
}

fn quality(label: &str, image: &ImageVolume, regions: &QualityRegions) -> Result<QualityRecord> {
    let pick = |idx: &[usize]| idx.iter().map(|&i| image.voxels[i]).collect::<Vec<f64>>();
    let (insert, _) = mean_std(&pick(&regions.insert));
    let (fluid, _) = mean_std(&pick(&regions.fluid));
    let (_, air_sd) = mean_std(&pick(&regions.air));
    let (mu, sd) = mean_std(&image.voxels);
    if sd <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(QualityRecord { acquisition: label.into(), cnr: cnr(insert, fluid, air_sd)?, snr: snr((insert - mu) / sd, air_sd / sd)? })
}

/// Features of one acquisition; the image itself is not kept.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub table: FeatureTable,
    pub shuffled: Option<FeatureTable>,
    pub quality: Option<QualityRecord>,
}

/// Everything a report bundle contains. Sections not run are empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StudyReport {
    pub seed: u64,
    pub n_features: usize,
    pub quality: Vec<QualityRecord>,
    pub repeatability: Vec<StabilityReport>,
    pub reproducibility: Vec<StabilityReport>,
    pub te_grid: Option<TeGridReport>,
    pub tr_pair: Option<StabilityReport>,
    pub screens: Option<ScreenReport>,
    pub robust: Option<RobustSet>,
    /// Feature tables written alongside the report, by name.
    #[serde(skip)]
    pub tables: BTreeMap<String, FeatureTable>,
}

/// Runs simulations and extractions on demand and memoizes the feature
/// tables by acquisition label, so scenarios sharing acquisitions do not
/// recompute them.
pub struct Study {
    config: StudyConfig,
    phantom: Phantom,
    cache: Mutex<BTreeMap<String, Arc<Extracted>>>,
}

impl Study {
    pub fn new(config: StudyConfig) -> Result<Self> {
        config.validate()?;
        let phantom = Phantom::new(&config.phantom)?;
        Ok(Study { config, phantom, cache: Mutex::new(BTreeMap::new()) })
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn acquisition(&self, setup: &str, tag: &str, pose: Pose) -> Result<AcquisitionSpec> {
        let s = self.config.setup(setup)?;
        Ok(AcquisitionSpec { setup: s.name.clone(), tag: tag.into(), sequence: s.sequence.clone(), pose })
    }

    pub fn with_timing(&self, setup: &str, te_ms: f64, tr_ms: f64) -> Result<AcquisitionSpec> {
        let mut a = self.acquisition(setup, &format!("te{te_ms}_tr{tr_ms}"), Pose::Base)?;
        a.sequence.te_ms = te_ms;
        a.sequence.tr_ms = tr_ms;
        Ok(a)
    }

    fn pose(&self, pose: Pose) -> RigidTransform {
        match pose {
            Pose::Base => self.config.base_pose.clone(),
            Pose::Repositioned => self.config.reposition.compose(&self.config.base_pose),
        }
    }

    /// ROI labels for `spec`. The repositioned mask is the base-pose mask
    /// carried through the repositioning motion, as a reader would transfer it.
    fn mask(&self, spec: &AcquisitionSpec) -> Result<RoiMask> {
        let grid = spec.sequence.grid(&self.config.phantom);
        let base = generate_roi_masks(&self.config.phantom, &grid, &self.config.base_pose)?;
        match spec.pose {
            Pose::Base => Ok(base),
            Pose::Repositioned => transform_mask(&base, &self.config.reposition, &grid),
        }
    }

    fn scanner_seed(&self, spec: &AcquisitionSpec) -> u64 {
        derive_seed(self.config.seed, &spec.label())
    }

    /// Simulated image and its ROI mask.
    pub fn simulate(&self, spec: &AcquisitionSpec) -> Result<(ImageVolume, RoiMask)> {
        let setup = self.config.setup(&spec.setup)?;
        let scanner = self.config.scanner(&setup.scanner)?;
        let (map, _) = crate::phantom::scene(&self.phantom, &spec.sequence, &self.pose(spec.pose))?;
        let image = simulate_t2w(&map, &self.config.phantom, &spec.sequence, scanner, self.scanner_seed(spec))?;
        Ok((image, self.mask(spec)?))
    }

    /// Feature tables for `specs`, computing the missing ones. Acquisitions
    /// sharing a scene are simulated from one material map, one at a time,
    /// and each image is dropped as soon as its features are extracted.
    pub fn extract(&self, specs: &[AcquisitionSpec], shuffled: bool) -> Result<Vec<Arc<Extracted>>> {
        let todo: Vec<&AcquisitionSpec> = {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::BTreeSet::new();
            specs
                .iter()
                .filter(|s| cache.get(&s.label()).map_or(true, |e| shuffled && e.shuffled.is_none()))
                .filter(|s| seen.insert(s.label()))
                .collect()
        };
        let mut groups: BTreeMap<String, Vec<&AcquisitionSpec>> = BTreeMap::new();
        for s in todo {
            groups.entry(s.scene_key()).or_default().push(s);
        }
        let groups: Vec<Vec<&AcquisitionSpec>> = groups.into_values().collect();
        let done: Vec<Vec<(String, Extracted)>> = groups.par_iter().map(|g| self.extract_scene(g, shuffled)).collect::<Result<_>>()?;
        let mut cache = self.cache.lock().unwrap();
        for (label, e) in done.into_iter().flatten() {
            cache.insert(label, Arc::new(e));
        }
        Ok(specs.iter().map(|s| cache[&s.label()].clone()).collect())
    }

    fn extract_scene(&self, group: &[&AcquisitionSpec], shuffled: bool) -> Result<Vec<(String, Extracted)>> {
        let first = group[0];
        let pose = self.pose(first.pose);
        let (map, grid) = crate::phantom::scene(&self.phantom, &first.sequence, &pose)?;
        let mask = self.mask(first)?;
        let regions = quality_regions(&self.phantom, &grid, &pose)?;
        let ex = &self.config.extraction;
        let mut out = Vec::new();
        for spec in group {
            let setup = self.config.setup(&spec.setup)?;
            let scanner = self.config.scanner(&setup.scanner)?;
            let label = spec.label();
            log::info!("simulating and extracting {label}");
            let image = simulate_t2w(&map, &self.config.phantom, &spec.sequence, scanner, self.scanner_seed(spec))?;
            // A noiseless scanner has no CNR or SNR.
            let q = match quality(&label, &image, &regions) {
                Ok(q) => Some(q),
                Err(Error::ZeroNoise) => None,
                Err(e) => return Err(e),
            };
            let table = compute_features(&image, &mask, ex)?;
            let shuffled = if shuffled {
                let seed = derive_seed(self.config.seed, &format!("{label}/shuffle"));
                Some(compute_features(&shuffle_intensities(&image, seed), &mask, ex)?)
            } else {
                None
            };
            out.push((label, Extracted { table, shuffled, quality: q }));
        }
        Ok(out)
    }

    /// Feature tables of the configured file inputs, read one at a time.
    pub fn extract_inputs(&self, shuffled: bool) -> Result<Vec<(String, Extracted)>> {
        let ex = &self.config.extraction;
        self.config
            .inputs
            .iter()
            .map(|input| {
                let image = read_nifti(&input.image)?;
                let mask = read_nifti_mask(&input.mask)?;
                let table = compute_features(&image, &mask, ex)?;
                let shuffled = if shuffled {
                    let seed = derive_seed(self.config.seed, &format!("{}/shuffle", input.name));
                    Some(compute_features(&shuffle_intensities(&image, seed), &mask, ex)?)
                } else {
                    None
                };
                Ok((input.name.clone(), Extracted { table, shuffled, quality: None }))
            })
            .collect()
    }

    fn repeat_setups(&self) -> Vec<String> {
        self.config.setups.iter().filter(|s| s.repeatability).map(|s| s.name.clone()).collect()
    }

    /// Test-retest ICC per repeatability setup: fixed1 vs fixed2, or fixed1
    /// vs the repositioned acquisition.
    pub fn repeatability(&self, pose: Pose) -> Result<Vec<StabilityReport>> {
        let (tag, scenario) = match pose {
            Pose::Base => ("fixed2", Scenario::RepeatabilityFixed),
            Pose::Repositioned => ("repositioned", Scenario::RepeatabilityRepositioned),
        };
        let mut specs = Vec::new();
        for s in self.repeat_setups() {
            specs.push(self.acquisition(&s, "fixed1", Pose::Base)?);
            specs.push(self.acquisition(&s, tag, pose)?);
        }
        let done = self.extract(&specs, false)?;
        specs
            .chunks(2)
            .zip(done.chunks(2))
            .map(|(s, e)| {
                let label = format!("{} {}", s[0].setup, if pose == Pose::Base { "fixed" } else { "repositioned" });
                repeatability_report(scenario, &label, &[(&s[0].label(), &e[0].table), (&s[1].label(), &e[1].table)])
            })
            .collect()
    }

    /// CCC between the first acquisitions of each configured setup pair.
    pub fn reproducibility(&self) -> Result<Vec<StabilityReport>> {
        let mut specs = Vec::new();
        for [a, b] in &self.config.reproducibility_pairs {
            specs.push(self.acquisition(a, "fixed1", Pose::Base)?);
            specs.push(self.acquisition(b, "fixed1", Pose::Base)?);
        }
        let done = self.extract(&specs, false)?;
        specs
            .chunks(2)
            .zip(done.chunks(2))
            .map(|(s, e)| {
                let label = format!("{} vs {}", s[0].setup, s[1].setup);
                let level = self.config.ccc_level;
                reproducibility_report(Scenario::ReproducibilityPair, &label, (&s[0].label(), &e[0].table), (&s[1].label(), &e[1].table), level)
            })
            .collect()
    }

    fn te_config(&self) -> Result<&super::TeGridConfig> {
        self.config.te_grid.as_ref().ok_or_else(|| Error::invalid("te_grid", "not configured"))
    }

    pub fn te_grid(&self) -> Result<TeGridReport> {
        let te = self.te_config()?;
        let specs: Vec<AcquisitionSpec> = te.te_ms.iter().map(|&t| self.with_timing(&te.setup, t, te.tr_ms)).collect::<Result<_>>()?;
        let done = self.extract(&specs, false)?;
        let tables: Vec<&FeatureTable> = done.iter().map(|e| &e.table).collect();
        TeGridReport::compute(&te.te_ms, te.tr_ms, &tables, self.config.ccc_level)
    }

    pub fn tr_pair(&self) -> Result<StabilityReport> {
        let te = self.te_config()?;
        let [a, b] = te.tr_pair_ms[..] else {
            return Err(Error::invalid("te_grid.tr_pair_ms", "needs two TR values"));
        };
        let specs = [self.with_timing(&te.setup, te.tr_pair_te_ms, a)?, self.with_timing(&te.setup, te.tr_pair_te_ms, b)?];
        let done = self.extract(&specs, false)?;
        let label = format!("TR {a} vs {b} at TE {}", te.tr_pair_te_ms);
        reproducibility_report(Scenario::TrPair, &label, (&specs[0].label(), &done[0].table), (&specs[1].label(), &done[1].table), self.config.ccc_level)
    }

    /// Tables the screens run on: the file inputs when configured, otherwise
    /// the first acquisition of every repeatability setup.
    fn screen_tables(&self, shuffled: bool) -> Result<Vec<(String, Arc<Extracted>)>> {
        if !self.config.inputs.is_empty() {
            return Ok(self.extract_inputs(shuffled)?.into_iter().map(|(n, e)| (n, Arc::new(e))).collect());
        }
        let specs: Vec<AcquisitionSpec> = self.repeat_setups().iter().map(|s| self.acquisition(s, "fixed1", Pose::Base)).collect::<Result<_>>()?;
        let done = self.extract(&specs, shuffled)?;
        Ok(specs.iter().map(|s| s.label()).zip(done).collect())
    }

    /// Shape and shuffle screens, each intersected across the screened tables.
    pub fn screens(&self, shape: bool, shuffle: bool) -> Result<ScreenReport> {
        let tables = self.screen_tables(shuffle)?;
        let mut shape_sets = Vec::new();
        let mut shuffle_sets = Vec::new();
        for (_, e) in &tables {
            if shape {
                shape_sets.push(shape_screen(&e.table, self.config.screens.shape_spearman)?);
            }
            if let (true, Some(s)) = (shuffle, &e.shuffled) {
                shuffle_sets.push(shuffle_screen(&e.table, s, self.config.screens.shuffle_icc)?);
            }
        }
        Ok(ScreenReport::new(tables.into_iter().map(|(n, _)| n).collect(), intersect(&shape_sets), intersect(&shuffle_sets)))
    }

    /// Feature tables for the `extract` subcommand: file inputs if any,
    /// otherwise the first acquisition of every setup.
    pub fn feature_tables(&self) -> Result<BTreeMap<String, FeatureTable>> {
        if !self.config.inputs.is_empty() {
            return Ok(self.extract_inputs(false)?.into_iter().map(|(n, e)| (n, e.table)).collect());
        }
        let specs: Vec<AcquisitionSpec> =
            self.config.setups.iter().map(|s| self.acquisition(&s.name, "fixed1", Pose::Base)).collect::<Result<_>>()?;
        let done = self.extract(&specs, false)?;
        Ok(specs.iter().map(|s| s.label()).zip(done.iter().map(|e| e.table.clone())).collect())
    }

    /// Runs the plan's scenarios and assembles one report.
    pub fn run(&self, scenarios: &[Scenario]) -> Result<StudyReport> {
        let all = scenarios.contains(&Scenario::FullPipeline);
        let has = |s: Scenario| all || scenarios.contains(&s);
        let mut report = StudyReport { seed: self.config.seed, n_features: self.config.extraction.feature_keys().len(), ..Default::default() };
        if has(Scenario::RepeatabilityFixed) {
            report.repeatability.extend(self.repeatability(Pose::Base)?);
        }
        if has(Scenario::RepeatabilityRepositioned) {
            report.repeatability.extend(self.repeatability(Pose::Repositioned)?);
        }
        if has(Scenario::ReproducibilityPair) && !self.config.reproducibility_pairs.is_empty() {
            report.reproducibility = self.reproducibility()?;
        }
        let te = self.config.te_grid.as_ref();
        if has(Scenario::TeGrid) && te.is_some() {
            report.te_grid = Some(self.te_grid()?);
        }
        if has(Scenario::TrPair) && te.is_some_and(|t| t.tr_pair_ms.len() == 2) {
            report.tr_pair = Some(self.tr_pair()?);
        }
        let (shape, shuffle) = (has(Scenario::ShapeScreen), has(Scenario::ShuffleScreen));
        if shape || shuffle {
            report.screens = Some(self.screens(shape, shuffle)?);
        }
        if all {
            let reports: Vec<&StabilityReport> = report.repeatability.iter().chain(&report.reproducibility).collect();
            let s = report.screens.as_ref().expect("screens run in the full pipeline");
            report.robust = Some(compose_robust_set(&reports, &s.shape_correlated, &s.shuffle_flagged)?);
        }
        let cache = self.cache.lock().unwrap();
        report.quality = cache.values().filter_map(|e| e.quality.clone()).collect();
        for s in &self.config.setups {
            let label = format!("{}_fixed1", s.name);
            if let Some(e) = cache.get(&label) {
                report.tables.insert(label, e.table.clone());
            }
        }
        Ok(report)
    }
}

/// Validates the plan and runs it on a fresh study.
pub fn run_plan(plan: &ExperimentPlan) -> Result<StudyReport> {
    plan.validate()?;
    Study::new(plan.config.clone())?.run(&plan.scenarios)
}
