//! Small synthetic datasets for examples, tests and benchmarks.
//!
//! Masks are nearest-seed partitions of the image, so every class forms a few
//! compact regions with straight-ish boundaries, roughly like organs in a
//! situs. Cube spectra are smooth class-specific curves plus noise.

use std::path::Path;

use crate::augment::rng::{derive_seed, RngStream};
use crate::cube::{HsiCube, LabelMap, SegmentationMask};
use crate::error::Result;
use crate::io::{save_cube, save_labelmap, save_mask};
use crate::manifest::{save_manifest, DatasetManifest, ManifestEntry, Scenario, Split};

/// Nearest-seed partition with `regions` seeds labelled uniformly from `0..classes`.
pub fn region_mask(rng: &mut RngStream, height: usize, width: usize, classes: u8, regions: usize) -> SegmentationMask {
    let seeds: Vec<(f64, f64, u8)> = (0..regions.max(1))
        .map(|_| {
            (
                rng.uniform(0.0, height as f64),
                rng.uniform(0.0, width as f64),
                rng.index(classes as usize) as u8,
            )
        })
        .collect();
    SegmentationMask::from_fn(height, width, |y, x| {
        let (y, x) = (y as f64 + 0.5, x as f64 + 0.5);
        seeds
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - y).powi(2) + (a.1 - x).powi(2);
                let db = (b.0 - y).powi(2) + (b.1 - x).powi(2);
                da.total_cmp(&db)
            })
            .map_or(0, |s| s.2)
    })
}

/// Every pixel independently uniform over `0..classes`.
pub fn noise_mask(rng: &mut RngStream, height: usize, width: usize, classes: u8) -> SegmentationMask {
    SegmentationMask::from_fn(height, width, |_, _| rng.index(classes as usize) as u8)
}

/// Reflectance-like spectrum of `class` at the given wavelengths.
pub fn class_spectrum(class: u8, wavelengths: &[f64]) -> Vec<f32> {
    let centre = 520.0 + 23.0 * class as f64;
    let depth = 0.2 + 0.03 * (class % 7) as f64;
    wavelengths
        .iter()
        .map(|&w| {
            let dip = depth * (-((w - centre) / 60.0).powi(2)).exp();
            (0.6 - dip + 0.0002 * (w - 500.0)) as f32
        })
        .collect()
}

/// Cube whose pixels follow the spectrum of their mask class, with uniform noise of `noise`.
pub fn spectral_cube(rng: &mut RngStream, mask: &SegmentationMask, wavelengths: &[f64], noise: f64) -> HsiCube {
    let c = wavelengths.len();
    let spectra: Vec<Vec<f32>> = (0..=u8::MAX).map(|l| class_spectrum(l, wavelengths)).collect();
    let mut data = Vec::with_capacity(mask.labels().len() * c);
    for &l in mask.labels() {
        for &v in &spectra[l as usize] {
            data.push(v + rng.uniform(-noise, noise) as f32);
        }
    }
    HsiCube::new(mask.height(), mask.width(), wavelengths.to_vec(), data).expect("consistent toy cube")
}

/// Evenly spaced wavelengths over the 500-995 nm camera range.
pub fn wavelengths(channels: usize) -> Vec<f64> {
    if channels == 1 {
        return vec![500.0];
    }
    (0..channels)
        .map(|i| 500.0 + 495.0 * i as f64 / (channels - 1) as f64)
        .collect()
}

#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub subjects: usize,
    pub images_per_subject: usize,
    /// The first `test_subjects` subjects form the test split.
    pub test_subjects: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Classes including background (label 0).
    pub classes: u8,
    pub regions: usize,
    pub seed: u64,
}

impl Default for ToyDataset {
    fn default() -> Self {
        Self {
            subjects: 4,
            images_per_subject: 3,
            test_subjects: 1,
            height: 48,
            width: 64,
            channels: 16,
            classes: 5,
            regions: 9,
            seed: 0,
        }
    }
}

impl ToyDataset {
    pub fn labelmap(&self) -> LabelMap {
        let names: Vec<String> = (0..self.classes)
            .map(|l| {
                if l == 0 {
                    "background".to_string()
                } else {
                    format!("organ{l}")
                }
            })
            .collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        LabelMap::from_names(&refs).expect("valid toy label map")
    }

    /// Generates image `index` of the dataset in memory.
    pub fn image(&self, index: usize) -> (HsiCube, SegmentationMask) {
        let mut rng = RngStream::new(derive_seed(self.seed, &[index as u64]));
        let mask = region_mask(&mut rng, self.height, self.width, self.classes, self.regions);
        let cube = spectral_cube(&mut rng, &mask, &wavelengths(self.channels), 0.01);
        (cube, mask)
    }

    /// Writes all cubes, masks, `labels.toml` and `manifest.json` into `dir`.
    /// Every second image carries the occlusion flag.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        save_labelmap(&self.labelmap(), dir.join("labels.toml"))?;
        let mut images = Vec::new();
        for s in 0..self.subjects {
            for k in 0..self.images_per_subject {
                let index = s * self.images_per_subject + k;
                let id = format!("S{s:02}_{k:03}");
                let (cube, mask) = self.image(index);
                save_cube(&cube, dir.join(format!("{id}.cube")))?;
                save_mask(&mask, dir.join(format!("{id}.mask")))?;
                images.push(ManifestEntry {
                    image_id: id.clone(),
                    subject_id: format!("S{s:02}"),
                    split: if s < self.test_subjects {
                        Split::Test
                    } else {
                        Split::Train
                    },
                    occlusion: index % 2 == 1,
                    scenario: Scenario::Original,
                    cube: format!("{id}.cube").into(),
                    mask: format!("{id}.mask").into(),
                    source_image: None,
                    manipulated_class: None,
                });
            }
        }
        let mut manifest = DatasetManifest::new(images);
        save_manifest(&manifest, dir.join("manifest.json"))?;
        manifest.base_dir = Some(dir.to_path_buf());
        Ok(manifest)
    }
}
