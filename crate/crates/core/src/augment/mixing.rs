//! Image-mixing augmentations: CutMix, Jigsaw and Organ Transplantation.
//!
//! Donor content is always read from the batch as it was before the step
//! started, so a recipient that also serves as a donor hands out its original
//! pixels. Labels travel with the spectra.

use rayon::prelude::*;

use super::noise::grid_cells;
use super::{AugmentEvent, Batch, CutMixParams, GridParams, Item, Rect, StepSeeds, TransplantParams};
use crate::error::Result;

/// Cube values and labels of a rectangle, detached from their image.
struct Patch {
    rect: Rect,
    data: Vec<f32>,
    labels: Vec<u8>,
}

impl Patch {
    fn extract(item: &Item, rect: Rect) -> Self {
        let (w, c) = (item.cube.width(), item.cube.channels());
        let mut data = Vec::with_capacity(rect.area() * c);
        let mut labels = Vec::with_capacity(rect.area());
        for y in rect.row0..rect.row1 {
            data.extend_from_slice(&item.cube.data()[(y * w + rect.col0) * c..(y * w + rect.col1) * c]);
            labels.extend_from_slice(&item.mask.labels()[y * w + rect.col0..y * w + rect.col1]);
        }
        Self { rect, data, labels }
    }

    fn apply(&self, item: &mut Item) {
        let (w, c) = (item.cube.width(), item.cube.channels());
        let rw = self.rect.col1 - self.rect.col0;
        for (k, y) in (self.rect.row0..self.rect.row1).enumerate() {
            item.cube.data_mut()[(y * w + self.rect.col0) * c..(y * w + self.rect.col1) * c]
                .copy_from_slice(&self.data[k * rw * c..(k + 1) * rw * c]);
            item.mask.labels_mut()[y * w + self.rect.col0..y * w + self.rect.col1]
                .copy_from_slice(&self.labels[k * rw..(k + 1) * rw]);
        }
    }
}

/// Copies cube values and labels inside `rect` from `donor` to `recipient`.
pub fn paste_rect(recipient: &mut Item, donor: &Item, rect: Rect) {
    let rect = rect.clip(recipient.cube.height(), recipient.cube.width());
    Patch::extract(donor, rect).apply(recipient);
}

/// Exchanges the content of `rect` between two items.
pub fn swap_rect(a: &mut Item, b: &mut Item, rect: Rect) {
    let rect = rect.clip(a.cube.height(), a.cube.width());
    let pa = Patch::extract(a, rect);
    let pb = Patch::extract(b, rect);
    pb.apply(a);
    pa.apply(b);
}

/// Pastes one donor rectangle (cube and labels) into each selected recipient.
pub fn cutmix(batch: &mut Batch, params: &CutMixParams, p: f64, seeds: StepSeeds) -> Result<Vec<AugmentEvent>> {
    batch.require_mixable("cutmix")?;
    let n = batch.len();
    let (h, w) = (batch.items()[0].cube.height(), batch.items()[0].cube.width());
    let plans: Vec<Option<(usize, Rect)>> = (0..n)
        .map(|i| {
            let mut rng = seeds.image(i);
            if !rng.bernoulli(p) {
                return None;
            }
            let donor = rng.index_except(n, i);
            let side = rng.uniform(params.area.0, params.area.1).sqrt();
            let rh = (h as f64 * side).round() as usize;
            let rw = (w as f64 * side).round() as usize;
            let cy = rng.index(h);
            let cx = rng.index(w);
            let rect = Rect::new(
                cy.saturating_sub(rh / 2),
                cy + rh - rh / 2,
                cx.saturating_sub(rw / 2),
                cx + rw - rw / 2,
            )
            .clip(h, w);
            Some((donor, rect))
        })
        .collect();

    let items = batch.items();
    let patches: Vec<Option<Patch>> = plans
        .par_iter()
        .map(|plan| plan.map(|(donor, rect)| Patch::extract(&items[donor], rect)))
        .collect();
    batch
        .items_mut()
        .par_iter_mut()
        .zip(&patches)
        .for_each(|(item, patch)| {
            if let Some(patch) = patch {
                patch.apply(item);
            }
        });

    Ok(plans
        .iter()
        .enumerate()
        .filter_map(|(recipient, plan)| plan.map(|(donor, rect)| AugmentEvent::CutMix { recipient, donor, rect }))
        .collect())
}

/// With probability `p` per batch, swaps each grid cell between two random
/// batch items with the cell probability.
pub fn jigsaw(batch: &mut Batch, params: &GridParams, p: f64, seeds: StepSeeds) -> Result<Vec<AugmentEvent>> {
    batch.require_mixable("jigsaw")?;
    let n = batch.len();
    let mut rng = seeds.batch();
    if !rng.bernoulli(p) {
        return Ok(Vec::new());
    }
    let (h, w) = (batch.items()[0].cube.height(), batch.items()[0].cube.width());
    let rows = grid_cells(h, params.rows);
    let cols = grid_cells(w, params.cols);
    let mut events = Vec::new();
    for (r, &(r0, r1)) in rows.iter().enumerate() {
        for (c, &(c0, c1)) in cols.iter().enumerate() {
            if !rng.bernoulli(params.cell_probability) {
                continue;
            }
            let first = rng.index(n);
            let second = rng.index_except(n, first);
            let (lo, hi) = (first.min(second), first.max(second));
            let (head, tail) = batch.items_mut().split_at_mut(hi);
            swap_rect(&mut head[lo], &mut tail[0], Rect::new(r0, r1, c0, c1));
            events.push(AugmentEvent::JigsawSwap {
                cell: (r, c),
                first,
                second,
            });
        }
    }
    Ok(events)
}

struct Transplant {
    donor: usize,
    classes: Vec<u8>,
}

/// Donor pixels of the chosen classes, gathered before any recipient is written.
struct Graft {
    indices: Vec<usize>,
    labels: Vec<u8>,
    spectra: Vec<f32>,
}

/// Organ Transplantation: each selected recipient receives every pixel (spectrum
/// and label) of randomly chosen classes from another image of the batch.
pub fn organ_transplantation(
    batch: &mut Batch,
    params: &TransplantParams,
    p: f64,
    seeds: StepSeeds,
) -> Result<Vec<AugmentEvent>> {
    batch.require_mixable("organ_transplantation")?;
    let n = batch.len();
    let mut events = Vec::new();

    let plans: Vec<Option<Transplant>> = (0..n)
        .map(|i| {
            let mut rng = seeds.image(i);
            if !rng.bernoulli(p) {
                return None;
            }
            let donor = rng.index_except(n, i);
            let eligible: Vec<u8> = batch.items()[donor]
                .mask
                .classes_present()
                .into_iter()
                .filter(|&l| params.include_background || l != params.background_label)
                .collect();
            if eligible.is_empty() {
                events.push(AugmentEvent::Skipped {
                    image: i,
                    reason: format!("organ_transplantation: donor {donor} has no eligible class"),
                });
                return None;
            }
            let classes = rng.choose_distinct(&eligible, params.classes_per_recipient);
            Some(Transplant { donor, classes })
        })
        .collect();

    let items = batch.items();
    let grafts: Vec<Option<Graft>> = plans
        .par_iter()
        .map(|plan| {
            plan.as_ref().map(|t| {
                let donor = &items[t.donor];
                let c = donor.cube.channels();
                let mut selected = [false; 256];
                t.classes.iter().for_each(|&k| selected[k as usize] = true);
                let mut graft = Graft {
                    indices: Vec::new(),
                    labels: Vec::new(),
                    spectra: Vec::new(),
                };
                for (idx, &l) in donor.mask.labels().iter().enumerate() {
                    if selected[l as usize] {
                        graft.indices.push(idx);
                        graft.labels.push(l);
                    }
                }
                graft.spectra.reserve(graft.indices.len() * c);
                for &idx in &graft.indices {
                    graft.spectra.extend_from_slice(donor.cube.spectrum(idx));
                }
                graft
            })
        })
        .collect();

    batch.items_mut().par_iter_mut().zip(&grafts).for_each(|(item, graft)| {
        let Some(graft) = graft else { return };
        let c = item.cube.channels();
        let data = item.cube.data_mut();
        for (k, &idx) in graft.indices.iter().enumerate() {
            data[idx * c..(idx + 1) * c].copy_from_slice(&graft.spectra[k * c..(k + 1) * c]);
        }
        let labels = item.mask.labels_mut();
        for (&idx, &l) in graft.indices.iter().zip(&graft.labels) {
            labels[idx] = l;
        }
    });

    for (recipient, (plan, graft)) in plans.iter().zip(&grafts).enumerate() {
        if let (Some(t), Some(g)) = (plan, graft) {
            for &class in &t.classes {
                events.push(AugmentEvent::Transplant {
                    recipient,
                    donor: t.donor,
                    class,
                    pixel_count: g.labels.iter().filter(|&&l| l == class).count(),
                });
            }
        }
    }
    Ok(events)
}
