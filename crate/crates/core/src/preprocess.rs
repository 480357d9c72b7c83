//! Reflectance calibration, per-pixel l1 normalization and RGB rendering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube::HsiCube;
use crate::error::{Error, Result};

/// `|white - dark|` below this marks a dead sensor element.
pub const CALIBRATION_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CalibrationReport {
    /// Elements where white and dark references coincide; their output is 0.
    pub degenerate_elements: usize,
    /// Elements clamped up to 0 because raw fell below dark.
    pub clamped_elements: usize,
}

/// Converts raw counts to reflectance: `(raw - dark) / (white - dark)`, clamped below at 0.
pub fn calibrate(raw: &HsiCube, white: &HsiCube, dark: &HsiCube) -> Result<(HsiCube, CalibrationReport)> {
    raw.check_layout(white, "white reference")?;
    raw.check_layout(dark, "dark reference")?;
    let mut report = CalibrationReport::default();
    let data = raw
        .data()
        .iter()
        .zip(white.data())
        .zip(dark.data())
        .map(|((&r, &w), &d)| {
            let denom = w as f64 - d as f64;
            if denom.abs() < CALIBRATION_EPSILON {
                report.degenerate_elements += 1;
                return 0.0;
            }
            let v = (r as f64 - d as f64) / denom;
            if v < 0.0 || !v.is_finite() {
                report.clamped_elements += 1;
                0.0
            } else {
                v as f32
            }
        })
        .collect();
    if report.degenerate_elements > 0 {
        log::warn!(
            "calibration: {} degenerate sensor elements set to 0",
            report.degenerate_elements
        );
    }
    Ok((raw.with_data(data), report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NormalizationReport {
    pub zero_spectra: usize,
}

/// Divides every pixel spectrum by its l1 norm. All-zero spectra pass through unchanged.
pub fn l1_normalize(cube: &HsiCube) -> (HsiCube, NormalizationReport) {
    let c = cube.channels();
    let mut data = cube.data().to_vec();
    let zero_spectra = data
        .par_chunks_mut(c)
        .map(|px| {
            let norm: f64 = px.iter().map(|v| (*v as f64).abs()).sum();
            if norm > 0.0 {
                for v in px.iter_mut() {
                    *v = (*v as f64 / norm) as f32;
                }
                0
            } else {
                1
            }
        })
        .sum();
    (cube.with_data(data), NormalizationReport { zero_spectra })
}

/// Half-open wavelength range `[start, end)` in nanometres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub start: f64,
    pub end: f64,
}

impl Band {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, wavelength: f64) -> bool {
        wavelength >= self.start && wavelength < self.end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbBands {
    pub red: Band,
    pub green: Band,
    pub blue: Band,
}

impl Default for RgbBands {
    fn default() -> Self {
        Self {
            red: Band::new(620.0, 750.0),
            green: Band::new(520.0, 600.0),
            blue: Band::new(450.0, 520.0),
        }
    }
}

impl RgbBands {
    /// Channel indices of `cube` falling into each band, in R, G, B order.
    pub fn channel_indices(&self, wavelengths: &[f64]) -> Result<[Vec<usize>; 3]> {
        let pick = |band: &Band, name: &str| -> Result<Vec<usize>> {
            let idx: Vec<usize> = wavelengths
                .iter()
                .enumerate()
                .filter(|(_, &w)| band.contains(w))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                Err(Error::Config(format!(
                    "{name} band [{}, {}) nm contains no cube channel",
                    band.start, band.end
                )))
            } else {
                Ok(idx)
            }
        };
        Ok([
            pick(&self.red, "red")?,
            pick(&self.green, "green")?,
            pick(&self.blue, "blue")?,
        ])
    }
}

/// Interleaved RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

/// Averages the cube channels inside each band and min-max scales every output
/// channel to `[0, 1]` over the image. A constant channel maps to 0.
pub fn rgb_reconstruct(cube: &HsiCube, bands: &RgbBands) -> Result<RgbImage> {
    let groups = bands.channel_indices(cube.wavelengths())?;
    let n = cube.pixels();
    let mut means = vec![0f64; n * 3];
    for p in 0..n {
        let s = cube.spectrum(p);
        for (k, idx) in groups.iter().enumerate() {
            let sum: f64 = idx.iter().map(|&c| s[c] as f64).sum();
            means[p * 3 + k] = sum / idx.len() as f64;
        }
    }
    let mut data = vec![0f32; n * 3];
    for k in 0..3 {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            let v = means[p * 3 + k];
            (lo.min(v), hi.max(v))
        });
        let range = hi - lo;
        if range > 0.0 {
            for p in 0..n {
                data[p * 3 + k] = ((means[p * 3 + k] - lo) / range) as f32;
            }
        }
    }
    Ok(RgbImage {
        height: cube.height(),
        width: cube.width(),
        data,
    })
}
