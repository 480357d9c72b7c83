//! Class neighbourhood matrices from cross-class 4-adjacency.

use std::collections::BTreeMap;

use serde::Serialize;

use super::aggregate::stable_mean;
use crate::cube::{LabelMap, SegmentationMask, INVALID_LABEL};
use crate::error::{Error, Result};

/// Entries below this proportion are blanked when rendered; the data keeps them.
pub const DISPLAY_THRESHOLD: f64 = 0.001;

/// `values[i][j]`: share of class `j`'s cross-class adjacencies that are with class `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborhoodMatrix {
    pub classes: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Whether column `j` had any cross-class adjacency in the data.
    pub observed: Vec<bool>,
}

impl NeighborhoodMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        self.values.iter().map(|row| row[j]).sum()
    }

    /// Row-major cells as strings, with entries below [`DISPLAY_THRESHOLD`] left empty.
    pub fn display_rows(&self) -> Vec<Vec<String>> {
        self.values
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| {
                        if v < DISPLAY_THRESHOLD {
                            String::new()
                        } else {
                            format!("{v:.3}")
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// `counts[j][i]`: number of 4-adjacent pixel pairs with labels `j` and `i != j`.
/// Invalid pixels are ignored.
pub fn adjacency_counts(mask: &SegmentationMask, classes: usize) -> Result<Vec<Vec<u64>>> {
    let mut counts = vec![vec![0u64; classes]; classes];
    let (h, w) = (mask.height(), mask.width());
    let labels = mask.labels();
    let mut add = |a: u8, b: u8| -> Result<()> {
        if a == b || a == INVALID_LABEL || b == INVALID_LABEL {
            return Ok(());
        }
        if a as usize >= classes || b as usize >= classes {
            return Err(Error::Structural(format!(
                "mask label {} is not defined in the label map ({classes} classes)",
                a.max(b)
            )));
        }
        counts[a as usize][b as usize] += 1;
        counts[b as usize][a as usize] += 1;
        Ok(())
    };
    for y in 0..h {
        for x in 0..w {
            let l = labels[y * w + x];
            if x + 1 < w {
                add(l, labels[y * w + x + 1])?;
            }
            if y + 1 < h {
                add(l, labels[(y + 1) * w + x])?;
            }
        }
    }
    Ok(counts)
}

/// Per-image neighbour proportions averaged over images of a subject, then over subjects.
pub fn neighborhood_matrix(masks: &[(SegmentationMask, String)], labelmap: &LabelMap) -> Result<NeighborhoodMatrix> {
    let k = labelmap.len();
    // (subject, column j) -> per-image proportion columns
    let mut per_subject: BTreeMap<(&str, usize), Vec<Vec<f64>>> = BTreeMap::new();
    for (mask, subject) in masks {
        let counts = adjacency_counts(mask, k)?;
        for (j, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                continue;
            }
            let column = row.iter().map(|&c| c as f64 / total as f64).collect();
            per_subject.entry((subject.as_str(), j)).or_default().push(column);
        }
    }

    let mut subject_columns: Vec<Vec<Vec<f64>>> = vec![Vec::new(); k];
    for ((_, j), columns) in per_subject {
        subject_columns[j].push(mean_columns(&columns, k));
    }

    let mut values = vec![vec![0.0; k]; k];
    let mut observed = vec![false; k];
    for (j, columns) in subject_columns.iter().enumerate() {
        if columns.is_empty() {
            continue;
        }
        observed[j] = true;
        for (i, v) in mean_columns(columns, k).into_iter().enumerate() {
            values[i][j] = v;
        }
    }
    Ok(NeighborhoodMatrix {
        classes: labelmap.entries().iter().map(|e| e.name.clone()).collect(),
        values,
        observed,
    })
}

fn mean_columns(columns: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| {
            let mut v: Vec<f64> = columns.iter().map(|c| c[i]).collect();
            stable_mean(&mut v)
        })
        .collect()
}
