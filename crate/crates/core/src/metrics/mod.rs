//! Per-image, per-class segmentation metrics: Dice similarity coefficient (DSC)
//! and normalized surface distance (NSD).
//!
//! Reference pixels marked invalid are removed from both the predicted and the
//! reference class sets. A class absent from both masks has no defined score and
//! produces no record.

pub mod edt;
mod record;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cube::{LabelMap, SegmentationMask, INVALID_LABEL};
use crate::error::{Error, Result};

pub use edt::squared_edt;
pub use record::{read_records, write_records, MetricRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "DSC")]
    Dsc,
    #[serde(rename = "NSD")]
    Nsd,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::Dsc => "DSC",
            Metric::Nsd => "NSD",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DSC" => Ok(Metric::Dsc),
            "NSD" => Ok(Metric::Nsd),
            _ => Err(Error::Config(format!("unknown metric '{s}' (expected DSC or NSD)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ClassMetric {
    pub class: u8,
    pub metric: Metric,
    pub value: f64,
    /// Number of valid reference pixels of the class.
    pub support: usize,
}

fn check_shapes(pred: &SegmentationMask, reference: &SegmentationMask) -> Result<()> {
    if pred.same_shape(reference) {
        Ok(())
    } else {
        Err(Error::Structural(format!(
            "prediction {}x{} does not match reference {}x{}",
            pred.height(),
            pred.width(),
            reference.height(),
            reference.width()
        )))
    }
}

/// Membership masks of class `l` in prediction and reference, restricted to valid reference pixels.
fn class_sets(pred: &SegmentationMask, reference: &SegmentationMask, l: u8) -> (Vec<bool>, Vec<bool>) {
    pred.labels()
        .iter()
        .zip(reference.labels())
        .map(|(&p, &r)| {
            let valid = r != INVALID_LABEL;
            (valid && p == l, valid && r == l)
        })
        .unzip()
}

/// `2|P∩R| / (|P| + |R|)`, or `None` when both sets are empty.
pub fn dsc(pred: &SegmentationMask, reference: &SegmentationMask, l: u8) -> Result<Option<f64>> {
    check_shapes(pred, reference)?;
    let (p, r) = class_sets(pred, reference, l);
    Ok(dice_of_sets(&p, &r))
}

fn dice_of_sets(p: &[bool], r: &[bool]) -> Option<f64> {
    let (mut np, mut nr, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in p.iter().zip(r) {
        np += a as usize;
        nr += b as usize;
        both += (a && b) as usize;
    }
    if np + nr == 0 {
        None
    } else {
        Some(2.0 * both as f64 / (np + nr) as f64)
    }
}

/// Pixels of `set` that touch the image border or have a 4-neighbour outside `set`.
pub fn boundary(set: &[bool], height: usize, width: usize) -> Vec<bool> {
    let mut out = vec![false; set.len()];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !set[i] {
                continue;
            }
            out[i] = y == 0
                || x == 0
                || y + 1 == height
                || x + 1 == width
                || !set[i - width]
                || !set[i + width]
                || !set[i - 1]
                || !set[i + 1];
        }
    }
    out
}

fn surface_score(bp: &[bool], br: &[bool], height: usize, width: usize, tau: f64) -> Option<f64> {
    let np = bp.iter().filter(|&&b| b).count();
    let nr = br.iter().filter(|&&b| b).count();
    if np + nr == 0 {
        return None;
    }
    let tau_sq = tau * tau;
    let within = |from: &[bool], to: &[bool]| -> usize {
        match squared_edt(to, height, width) {
            None => 0,
            Some(dist) => from
                .iter()
                .zip(&dist)
                .filter(|(&b, &d)| b && d as f64 <= tau_sq)
                .count(),
        }
    };
    let hits = within(bp, br) + within(br, bp);
    Some(hits as f64 / (np + nr) as f64)
}

/// Fraction of both class boundaries lying within `tau` pixels of the other boundary.
pub fn nsd(pred: &SegmentationMask, reference: &SegmentationMask, l: u8, tau: f64) -> Result<Option<f64>> {
    check_shapes(pred, reference)?;
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("NSD tolerance must be > 0, got {tau}")));
    }
    let (h, w) = (pred.height(), pred.width());
    let (p, r) = class_sets(pred, reference, l);
    Ok(surface_score(&boundary(&p, h, w), &boundary(&r, h, w), h, w, tau))
}

/// DSC and NSD for every class present (on valid reference pixels) in either mask,
/// ordered by class then metric.
pub fn evaluate_image(
    pred: &SegmentationMask,
    reference: &SegmentationMask,
    labelmap: &LabelMap,
) -> Result<Vec<ClassMetric>> {
    check_shapes(pred, reference)?;
    let (h, w) = (pred.height(), pred.width());
    let mut present = [false; 256];
    for (&p, &r) in pred.labels().iter().zip(reference.labels()) {
        if r != INVALID_LABEL {
            present[r as usize] = true;
            if p != INVALID_LABEL {
                present[p as usize] = true;
            }
        }
    }
    let mut out = Vec::new();
    for l in 0..INVALID_LABEL {
        if !present[l as usize] {
            continue;
        }
        if !labelmap.contains(l) {
            return Err(Error::Structural(format!(
                "label {l} is not defined in the label map ({} classes)",
                labelmap.len()
            )));
        }
        let (p, r) = class_sets(pred, reference, l);
        let support = r.iter().filter(|&&b| b).count();
        if let Some(value) = dice_of_sets(&p, &r) {
            out.push(ClassMetric {
                class: l,
                metric: Metric::Dsc,
                value,
                support,
            });
        }
        let (bp, br) = (boundary(&p, h, w), boundary(&r, h, w));
        if let Some(value) = surface_score(&bp, &br, h, w, labelmap.nsd_threshold(l)) {
            out.push(ClassMetric {
                class: l,
                metric: Metric::Nsd,
                value,
                support,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, y0: usize, x0: usize, side: usize) -> SegmentationMask {
        SegmentationMask::from_fn(h, w, |y, x| {
            u8::from(y >= y0 && y < y0 + side && x >= x0 && x < x0 + side)
        })
    }

    #[test]
    fn dsc_examples() {
        let a = square(8, 8, 1, 1, 3);
        assert_eq!(dsc(&a, &a, 1).unwrap(), Some(1.0));
        let b = square(8, 8, 5, 5, 3);
        assert_eq!(dsc(&a, &b, 1).unwrap(), Some(0.0));
        // |P| = |R| = 4, overlap 2
        let p = SegmentationMask::new(1, 6, vec![1, 1, 1, 1, 0, 0]).unwrap();
        let r = SegmentationMask::new(1, 6, vec![0, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(dsc(&p, &r, 1).unwrap(), Some(0.5));
        assert_eq!(dsc(&p, &r, 7).unwrap(), None);
    }

    #[test]
    fn invalid_reference_pixels_excluded() {
        let p = SegmentationMask::new(1, 4, vec![1, 1, 1, 1]).unwrap();
        let r = SegmentationMask::new(1, 4, vec![1, 1, INVALID_LABEL, INVALID_LABEL]).unwrap();
        assert_eq!(dsc(&p, &r, 1).unwrap(), Some(1.0));
    }

    #[test]
    fn shape_mismatch_is_structural() {
        let a = SegmentationMask::filled(2, 2, 0);
        let b = SegmentationMask::filled(2, 3, 0);
        assert!(matches!(dsc(&a, &b, 0), Err(Error::Structural(_))));
        assert!(matches!(nsd(&a, &b, 0, 1.0), Err(Error::Structural(_))));
    }

    #[test]
    fn nsd_examples() {
        let a = square(12, 12, 3, 3, 5);
        assert_eq!(nsd(&a, &a, 1, 3.0).unwrap(), Some(1.0));
        let far = square(12, 12, 3, 3, 2);
        let other = SegmentationMask::from_fn(12, 12, |y, x| u8::from(y >= 9 && x >= 9));
        assert_eq!(nsd(&far, &other, 1, 2.0).unwrap(), Some(0.0));
        let shifted = square(12, 12, 3, 4, 5);
        assert_eq!(nsd(&a, &shifted, 1, 1.0).unwrap(), Some(1.0));
        assert!(nsd(&a, &a, 1, 0.0).is_err());
    }

    #[test]
    fn evaluate_identical_masks() {
        let labelmap = LabelMap::from_names(&["bg", "a", "b"]).unwrap();
        let m = SegmentationMask::from_fn(6, 6, |y, _| (y / 2) as u8);
        let recs = evaluate_image(&m, &m, &labelmap).unwrap();
        assert_eq!(recs.len(), 6);
        assert!(recs.iter().all(|r| r.value == 1.0));
    }

    #[test]
    fn evaluate_missing_prediction_and_all_invalid() {
        let labelmap = LabelMap::from_names(&["bg", "a"]).unwrap();
        let reference = SegmentationMask::from_fn(4, 4, |y, _| u8::from(y < 2));
        let pred = SegmentationMask::filled(4, 4, 0);
        let recs = evaluate_image(&pred, &reference, &labelmap).unwrap();
        let a_dsc = recs.iter().find(|r| r.class == 1 && r.metric == Metric::Dsc).unwrap();
        assert_eq!(a_dsc.value, 0.0);
        assert_eq!(a_dsc.support, 8);

        let none = SegmentationMask::filled(4, 4, INVALID_LABEL);
        assert!(evaluate_image(&pred, &none, &labelmap).unwrap().is_empty());
    }

    #[test]
    fn boundary_of_full_image_is_frame() {
        let b = boundary(&[true; 16], 4, 4);
        assert_eq!(b.iter().filter(|&&v| v).count(), 12);
    }
}
