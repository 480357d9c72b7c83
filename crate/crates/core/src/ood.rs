//! Manipulated out-of-distribution datasets: organs in isolation and organ removal.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::{HsiCube, LabelMap, SegmentationMask, INVALID_LABEL};
use crate::error::{Error, Result};
use crate::io::{load_cube, load_mask, save_cube, save_mask};
use crate::manifest::{save_manifest, DatasetManifest, ManifestEntry, Scenario};

/// What replaced pixels are filled with.
#[derive(Clone, Copy, Debug)]
pub enum Fill<'a> {
    Zero,
    /// Spatially co-located spectra of a background recording.
    Background(&'a HsiCube),
}

/// Label assigned to replaced pixels in the output mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacedLabel {
    /// Excluded from evaluation.
    Invalid,
    /// Counted as the label map's background class.
    Background,
}

impl ReplacedLabel {
    /// Invalid for zero fill, background for background fill.
    pub fn default_for(fill: &Fill<'_>) -> Self {
        match fill {
            Fill::Zero => ReplacedLabel::Invalid,
            Fill::Background(_) => ReplacedLabel::Background,
        }
    }

    fn label(self, background: u8) -> u8 {
        match self {
            ReplacedLabel::Invalid => INVALID_LABEL,
            ReplacedLabel::Background => background,
        }
    }
}

fn replace_where(
    cube: &HsiCube,
    mask: &SegmentationMask,
    fill: &Fill<'_>,
    new_label: u8,
    replace: impl Fn(u8) -> bool,
) -> Result<(HsiCube, SegmentationMask)> {
    mask.check_matches_cube(cube)?;
    if let Fill::Background(bg) = fill {
        cube.check_layout(bg, "background cube")?;
    }
    let mut out_cube = cube.clone();
    let mut out_mask = mask.clone();
    for (idx, &l) in mask.labels().iter().enumerate() {
        if !replace(l) {
            continue;
        }
        match fill {
            Fill::Zero => out_cube.spectrum_mut(idx).fill(0.0),
            Fill::Background(bg) => out_cube.spectrum_mut(idx).copy_from_slice(bg.spectrum(idx)),
        }
        out_mask.labels_mut()[idx] = new_label;
    }
    Ok((out_cube, out_mask))
}

/// Replaces every pixel not labelled `class`. Returns `None` when `class` is absent.
pub fn isolate(
    cube: &HsiCube,
    mask: &SegmentationMask,
    class: u8,
    fill: Fill<'_>,
    replaced: ReplacedLabel,
    background_label: u8,
) -> Result<Option<(HsiCube, SegmentationMask)>> {
    if !mask.labels().contains(&class) {
        log::info!("isolate: class {class} absent, skipping");
        return Ok(None);
    }
    replace_where(cube, mask, &fill, replaced.label(background_label), |l| l != class).map(Some)
}

/// Replaces exactly the pixels labelled `class`. Returns `None` when `class` is absent.
pub fn remove(
    cube: &HsiCube,
    mask: &SegmentationMask,
    class: u8,
    fill: Fill<'_>,
    replaced: ReplacedLabel,
    background_label: u8,
) -> Result<Option<(HsiCube, SegmentationMask)>> {
    if !mask.labels().contains(&class) {
        log::info!("remove: class {class} absent, skipping");
        return Ok(None);
    }
    replace_where(cube, mask, &fill, replaced.label(background_label), |l| l == class).map(Some)
}

/// Classes of `mask` that yield one manipulated image in `scenario`.
pub fn eligible_classes(
    mask: &SegmentationMask,
    scenario: Scenario,
    background: u8,
    remove_background: bool,
) -> Vec<u8> {
    mask.classes_present()
        .into_iter()
        .filter(|&l| !(scenario.is_removal() && l == background && !remove_background))
        .collect()
}

/// One synthesis run over a source dataset.
#[derive(Clone, Debug)]
pub struct ManipulationJob {
    pub source: DatasetManifest,
    pub scenario: Scenario,
    /// Required for the `*_bgr` scenarios.
    pub background: Option<HsiCube>,
    pub output_root: PathBuf,
    pub labelmap: LabelMap,
    /// Overrides [`ReplacedLabel::default_for`].
    pub replaced_label: Option<ReplacedLabel>,
    /// Also produce removal images for the background class.
    pub remove_background: bool,
}

impl ManipulationJob {
    pub fn new(
        source: DatasetManifest,
        scenario: Scenario,
        labelmap: LabelMap,
        output_root: impl Into<PathBuf>,
    ) -> Self {
        Self {
            source,
            scenario,
            background: None,
            output_root: output_root.into(),
            labelmap,
            replaced_label: None,
            remove_background: false,
        }
    }

    pub fn with_background(mut self, cube: HsiCube) -> Self {
        self.background = Some(cube);
        self
    }

    fn fill(&self) -> Result<Fill<'_>> {
        match self.scenario {
            Scenario::IsolationZero | Scenario::RemovalZero => Ok(Fill::Zero),
            Scenario::IsolationBgr | Scenario::RemovalBgr => self
                .background
                .as_ref()
                .map(Fill::Background)
                .ok_or_else(|| Error::Config(format!("scenario {} needs a background cube", self.scenario))),
            other => Err(Error::Config(format!("{other} is not a manipulated scenario"))),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SynthesisReport {
    pub scenario: String,
    pub source_images: usize,
    pub output_images: usize,
    /// Output images per manipulated class name.
    pub per_class: BTreeMap<String, usize>,
    #[serde(skip)]
    pub manifest: DatasetManifest,
}

/// Output image id for a manipulated image.
pub fn output_name(source_id: &str, scenario: Scenario, class_name: &str) -> String {
    format!("{source_id}@{scenario}@{class_name}")
}

/// Writes one manipulated image per (source image, eligible class) under
/// `job.output_root` together with `manifest.json`, and returns the output manifest.
/// Subject, split and occlusion flags are inherited from the source image.
pub fn synthesize_dataset(job: &ManipulationJob) -> Result<SynthesisReport> {
    let fill = job.fill()?;
    let replaced = job.replaced_label.unwrap_or_else(|| ReplacedLabel::default_for(&fill));
    let background = job.labelmap.background();
    fs::create_dir_all(&job.output_root).map_err(|e| Error::io(&job.output_root, e))?;
    let written = AtomicUsize::new(0);

    let per_image: Result<Vec<Vec<ManifestEntry>>> = job
        .source
        .images
        .par_iter()
        .map(|entry| {
            let cube_path = job.source.cube_path(entry);
            let mask_path = job.source.mask_path(entry);
            let cube = load_cube(&cube_path)?;
            let mask = load_mask(&mask_path)?;
            job.labelmap.check_mask(&mask)?;
            let mut out = Vec::new();
            for class in eligible_classes(&mask, job.scenario, background, job.remove_background) {
                let manipulated = if job.scenario.is_removal() {
                    remove(&cube, &mask, class, fill, replaced, background)?
                } else {
                    isolate(&cube, &mask, class, fill, replaced, background)?
                };
                let Some((c, m)) = manipulated else { continue };
                let class_name = job.labelmap.name(class).expect("checked against label map");
                let id = output_name(&entry.image_id, job.scenario, class_name);
                let cube_rel = PathBuf::from(format!("{id}.cube"));
                let mask_rel = PathBuf::from(format!("{id}.mask"));
                let (cube_out, mask_out) = (job.output_root.join(&cube_rel), job.output_root.join(&mask_rel));
                if same_file(&cube_out, &cube_path) || same_file(&mask_out, &mask_path) {
                    return Err(Error::Config(format!(
                        "output {} would overwrite a source file",
                        cube_out.display()
                    )));
                }
                save_cube(&c, &cube_out)?;
                save_mask(&m, &mask_out)?;
                written.fetch_add(1, Ordering::Relaxed);
                out.push(ManifestEntry {
                    image_id: id,
                    subject_id: entry.subject_id.clone(),
                    split: entry.split,
                    occlusion: entry.occlusion,
                    scenario: job.scenario,
                    cube: cube_rel,
                    mask: mask_rel,
                    source_image: Some(entry.image_id.clone()),
                    manipulated_class: Some(class_name.to_string()),
                });
            }
            Ok(out)
        })
        .collect();

    let per_image = per_image.map_err(|e| Error::Partial {
        written: written.load(Ordering::Relaxed),
        source: Box::new(e),
    })?;

    let images: Vec<ManifestEntry> = per_image.into_iter().flatten().collect();
    let mut per_class = BTreeMap::new();
    for e in &images {
        *per_class
            .entry(e.manipulated_class.clone().unwrap_or_default())
            .or_insert(0) += 1;
    }
    let mut manifest = DatasetManifest::new(images);
    save_manifest(&manifest, job.output_root.join("manifest.json"))?;
    manifest.base_dir = Some(job.output_root.clone());
    Ok(SynthesisReport {
        scenario: job.scenario.to_string(),
        source_images: job.source.len(),
        output_images: manifest.len(),
        per_class,
        manifest,
    })
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Original-scenario images with (or without) real situs occlusions.
pub fn filter_occlusion(manifest: &DatasetManifest, want_occlusion: bool) -> DatasetManifest {
    let out = manifest.filtered(|e| e.scenario == Scenario::Original && e.occlusion == want_occlusion);
    log::info!(
        "filter_occlusion(want_occlusion={want_occlusion}): {} of {} images",
        out.len(),
        manifest.len()
    );
    out
}
