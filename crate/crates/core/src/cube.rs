//! Core image containers: spectral cubes, label masks and the label map.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mask value reserved for unannotated pixels.
pub const INVALID_LABEL: u8 = 255;

/// Default NSD tolerance in pixels, used for every class without an override.
pub const DEFAULT_NSD_THRESHOLD: f64 = 3.0;

/// A spatial-spectral image stored row-major as `(y, x, channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    wavelengths: Vec<f64>,
    data: Vec<f32>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, wavelengths: Vec<f64>, data: Vec<f32>) -> Result<Self> {
        if wavelengths.is_empty() {
            return Err(Error::Structural("cube needs at least one channel".into()));
        }
        if let Some(w) = wavelengths.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::Structural(format!(
                "wavelengths must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        let expected = height * width * wavelengths.len();
        if data.len() != expected {
            return Err(Error::Structural(format!(
                "data holds {} values, expected {height}x{width}x{} = {expected}",
                data.len(),
                wavelengths.len()
            )));
        }
        Ok(Self {
            height,
            width,
            wavelengths,
            data,
        })
    }

    /// A cube filled with `value`.
    pub fn filled(height: usize, width: usize, wavelengths: Vec<f64>, value: f32) -> Result<Self> {
        let len = height * width * wavelengths.len();
        Self::new(height, width, wavelengths, vec![value; len])
    }

    /// Evenly spaced wavelength axis `start, start + step, ...` with `count` entries.
    pub fn wavelength_grid(start: f64, step: f64, count: usize) -> Vec<f64> {
        (0..count).map(|i| start + step * i as f64).collect()
    }

    /// The 100-band, 500-995 nm axis of the reference camera.
    pub fn reference_wavelengths() -> Vec<f64> {
        Self::wavelength_grid(500.0, 5.0, 100)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Spectrum of the pixel with flat index `idx = y * width + x`.
    #[inline]
    pub fn spectrum(&self, idx: usize) -> &[f32] {
        let c = self.channels();
        &self.data[idx * c..(idx + 1) * c]
    }

    #[inline]
    pub fn spectrum_mut(&mut self, idx: usize) -> &mut [f32] {
        let c = self.channels();
        &mut self.data[idx * c..(idx + 1) * c]
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels() + c]
    }

    /// True when `other` has the same spatial shape, channel count and wavelength axis.
    pub fn same_layout(&self, other: &HsiCube) -> bool {
        self.height == other.height && self.width == other.width && self.wavelengths == other.wavelengths
    }

    pub(crate) fn check_layout(&self, other: &HsiCube, what: &str) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "{what}: cube {}x{}x{} does not match {}x{}x{} (or wavelength axes differ)",
                other.height,
                other.width,
                other.channels(),
                self.height,
                self.width,
                self.channels()
            )))
        }
    }

    /// A copy of this cube with a different payload of identical length.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            height: self.height,
            width: self.width,
            wavelengths: self.wavelengths.clone(),
            data,
        }
    }
}

/// Per-pixel class indices aligned to a cube. Unannotated pixels carry [`INVALID_LABEL`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SegmentationMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::Structural(format!(
                "mask holds {} labels, expected {height}x{width} = {}",
                labels.len(),
                height * width
            )));
        }
        Ok(Self { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Self {
        Self {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    /// Builds a mask by evaluating `f(y, x)` for every pixel.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut labels = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(y, x));
            }
        }
        Self { height, width, labels }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.labels[idx] != INVALID_LABEL
    }

    /// Per-pixel annotation flags.
    pub fn valid(&self) -> Vec<bool> {
        self.labels.iter().map(|&l| l != INVALID_LABEL).collect()
    }

    /// Sorted set of annotated labels present in the mask.
    pub fn classes_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..INVALID_LABEL).filter(|&l| seen[l as usize]).collect()
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn same_shape(&self, other: &SegmentationMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_matches_cube(&self, cube: &HsiCube) -> Result<()> {
        if self.height == cube.height() && self.width == cube.width() {
            Ok(())
        } else {
            Err(Error::Structural(format!(
                "mask {}x{} does not match cube {}x{}",
                self.height,
                self.width,
                cube.height(),
                cube.width()
            )))
        }
    }
}

/// One class of a [`LabelMap`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub index: u8,
    pub name: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub background: bool,
    /// NSD tolerance override in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nsd_threshold: Option<f64>,
}

/// Ordered class definitions with per-class NSD tolerances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabelMapDoc", into = "LabelMapDoc")]
pub struct LabelMap {
    entries: Vec<LabelEntry>,
    default_nsd_threshold: f64,
}

#[derive(Serialize, Deserialize)]
struct LabelMapDoc {
    format_version: u32,
    #[serde(default = "default_threshold")]
    default_nsd_threshold: f64,
    classes: Vec<LabelEntry>,
}

fn default_threshold() -> f64 {
    DEFAULT_NSD_THRESHOLD
}

pub(crate) const LABELMAP_FORMAT_VERSION: u32 = 1;

impl TryFrom<LabelMapDoc> for LabelMap {
    type Error = Error;

    fn try_from(doc: LabelMapDoc) -> Result<Self> {
        if doc.format_version != LABELMAP_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "label map format version {} is not supported (expected {})",
                doc.format_version, LABELMAP_FORMAT_VERSION
            )));
        }
        LabelMap::with_threshold(doc.classes, doc.default_nsd_threshold)
    }
}

impl From<LabelMap> for LabelMapDoc {
    fn from(map: LabelMap) -> Self {
        Self {
            format_version: LABELMAP_FORMAT_VERSION,
            default_nsd_threshold: map.default_nsd_threshold,
            classes: map.entries,
        }
    }
}

impl LabelMap {
    pub fn new(entries: Vec<LabelEntry>) -> Result<Self> {
        Self::with_threshold(entries, DEFAULT_NSD_THRESHOLD)
    }

    pub fn with_threshold(entries: Vec<LabelEntry>, default_nsd_threshold: f64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("label map is empty".into()));
        }
        if entries.len() >= INVALID_LABEL as usize {
            return Err(Error::Config(format!(
                "label map has {} classes; at most {} fit next to the invalid sentinel",
                entries.len(),
                INVALID_LABEL
            )));
        }
        if !(default_nsd_threshold > 0.0) {
            return Err(Error::Config("default NSD threshold must be > 0".into()));
        }
        let mut names = BTreeSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.index as usize != i {
                return Err(Error::Config(format!(
                    "label indices must be dense 0..K-1; entry {i} has index {}",
                    e.index
                )));
            }
            if !names.insert(e.name.as_str()) {
                return Err(Error::Config(format!("duplicate class name '{}'", e.name)));
            }
            if let Some(t) = e.nsd_threshold {
                if !(t > 0.0) {
                    return Err(Error::Config(format!(
                        "NSD threshold of '{}' must be > 0, got {t}",
                        e.name
                    )));
                }
            }
        }
        let backgrounds = entries.iter().filter(|e| e.background).count();
        if backgrounds != 1 {
            return Err(Error::Config(format!(
                "exactly one background class required, found {backgrounds}"
            )));
        }
        Ok(Self {
            entries,
            default_nsd_threshold,
        })
    }

    /// Builds a label map from names; the first name is the background class.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let entries = names
            .iter()
            .enumerate()
            .map(|(i, n)| LabelEntry {
                index: i as u8,
                name: n.as_ref().to_string(),
                background: i == 0,
                nsd_threshold: None,
            })
            .collect();
        Self::new(entries)
    }

    /// The 19-class porcine surgical label set (background plus 18 organ/tissue classes).
    pub fn surgical() -> Self {
        Self::from_names(&[
            "background",
            "heart",
            "lung",
            "stomach",
            "small_bowel",
            "colon",
            "liver",
            "gallbladder",
            "pancreas",
            "kidney",
            "spleen",
            "bladder",
            "kidney_with_gerotas_fascia",
            "subcutaneous_fat",
            "skin",
            "muscle",
            "omentum",
            "peritoneum",
            "major_vein",
        ])
        .expect("static label map is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LabelEntry] {
        &self.entries
    }

    pub fn contains(&self, label: u8) -> bool {
        (label as usize) < self.entries.len()
    }

    pub fn name(&self, label: u8) -> Option<&str> {
        self.entries.get(label as usize).map(|e| e.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<u8> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.index)
    }

    pub fn background(&self) -> u8 {
        self.entries
            .iter()
            .find(|e| e.background)
            .map(|e| e.index)
            .expect("validated label map has a background class")
    }

    pub fn nsd_threshold(&self, label: u8) -> f64 {
        self.entries
            .get(label as usize)
            .and_then(|e| e.nsd_threshold)
            .unwrap_or(self.default_nsd_threshold)
    }

    pub fn default_nsd_threshold(&self) -> f64 {
        self.default_nsd_threshold
    }

    /// Checks that every annotated label of `mask` is defined here.
    pub fn check_mask(&self, mask: &SegmentationMask) -> Result<()> {
        match mask.classes_present().into_iter().find(|&l| !self.contains(l)) {
            Some(l) => Err(Error::Structural(format!(
                "mask label {l} is not defined in the label map ({} classes)",
                self.len()
            ))),
            None => Ok(()),
        }
    }
}
