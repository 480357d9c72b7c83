//! Occlusion-style noise: random erasing and hide-and-seek.
//!
//! Both black out cube values only; mask labels under the erased region are kept.

use rayon::prelude::*;

use super::{AugmentEvent, Batch, ErasingParams, GridParams, Rect, StepSeeds};
use crate::cube::HsiCube;
use crate::error::Result;

const ERASING_ATTEMPTS: usize = 10;

/// Sets every channel inside `rect` to 0.
pub fn erase_rect(cube: &mut HsiCube, rect: Rect) {
    let rect = rect.clip(cube.height(), cube.width());
    let (w, c) = (cube.width(), cube.channels());
    let data = cube.data_mut();
    for y in rect.row0..rect.row1 {
        data[(y * w + rect.col0) * c..(y * w + rect.col1) * c].fill(0.0);
    }
}

/// Splits `0..len` into `n` contiguous spans `[i*len/n, (i+1)*len/n)`.
pub fn grid_cells(len: usize, n: usize) -> Vec<(usize, usize)> {
    (0..n).map(|i| (i * len / n, (i + 1) * len / n)).collect()
}

/// Blacks out one rectangle per image with probability `p`.
pub fn random_erasing(
    batch: &mut Batch,
    params: &ErasingParams,
    p: f64,
    seeds: StepSeeds,
) -> Result<Vec<AugmentEvent>> {
    let events = batch
        .items_mut()
        .par_iter_mut()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = seeds.image(i);
            if !rng.bernoulli(p) {
                return None;
            }
            let (h, w) = (item.cube.height(), item.cube.width());
            let image_area = (h * w) as f64;
            let (log_lo, log_hi) = (params.aspect.0.ln(), params.aspect.1.ln());
            for _ in 0..ERASING_ATTEMPTS {
                let area = rng.uniform(params.area.0, params.area.1) * image_area;
                let aspect = rng.uniform(log_lo, log_hi).exp();
                let rh = (area * aspect).sqrt().round() as usize;
                let rw = (area / aspect).sqrt().round() as usize;
                if rh == 0 || rw == 0 || rh > h || rw > w {
                    continue;
                }
                let row0 = rng.index(h - rh + 1);
                let col0 = rng.index(w - rw + 1);
                let rect = Rect::new(row0, row0 + rh, col0, col0 + rw);
                erase_rect(&mut item.cube, rect);
                return Some(AugmentEvent::Erased { image: i, rect });
            }
            Some(AugmentEvent::Skipped {
                image: i,
                reason: "random_erasing: no rectangle fit the image".into(),
            })
        })
        .collect::<Vec<_>>();
    Ok(events.into_iter().flatten().collect())
}

/// Partitions each selected image into a grid and hides every cell with the cell probability.
pub fn hide_and_seek(batch: &mut Batch, params: &GridParams, p: f64, seeds: StepSeeds) -> Result<Vec<AugmentEvent>> {
    let events = batch
        .items_mut()
        .par_iter_mut()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = seeds.image(i);
            if !rng.bernoulli(p) {
                return None;
            }
            let rows = grid_cells(item.cube.height(), params.rows);
            let cols = grid_cells(item.cube.width(), params.cols);
            let mut hidden = Vec::new();
            for (r, &(r0, r1)) in rows.iter().enumerate() {
                for (c, &(c0, c1)) in cols.iter().enumerate() {
                    if rng.bernoulli(params.cell_probability) {
                        erase_rect(&mut item.cube, Rect::new(r0, r1, c0, c1));
                        hidden.push((r, c));
                    }
                }
            }
            Some(AugmentEvent::HiddenCells {
                image: i,
                cells: hidden,
            })
        })
        .collect::<Vec<_>>();
    Ok(events.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Item;
    use crate::cube::SegmentationMask;

    fn ones_batch(n: usize, h: usize, w: usize, c: usize) -> Batch {
        let items = (0..n)
            .map(|i| {
                Item::new(
                    HsiCube::filled(h, w, HsiCube::wavelength_grid(500.0, 5.0, c), 1.0).unwrap(),
                    SegmentationMask::filled(h, w, i as u8),
                )
                .unwrap()
            })
            .collect();
        Batch::new(items).unwrap()
    }

    #[test]
    fn erase_rect_zeroes_exactly_the_rectangle() {
        let mut batch = ones_batch(1, 10, 12, 3);
        let rect = Rect::new(2, 5, 3, 9);
        erase_rect(&mut batch.items_mut()[0].cube, rect);
        let cube = &batch.items()[0].cube;
        let zeros = cube.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 3 * 6 * 3);
        for y in 0..10 {
            for x in 0..12 {
                let expect = if rect.contains(y, x) { 0.0 } else { 1.0 };
                assert!(cube.spectrum(y * 12 + x).iter().all(|&v| v == expect));
            }
        }
    }

    #[test]
    fn erasing_p_zero_is_identity() {
        let mut batch = ones_batch(3, 8, 8, 2);
        let before = batch.clone();
        random_erasing(&mut batch, &ErasingParams::default(), 0.0, StepSeeds::new(1, 0)).unwrap();
        assert_eq!(batch, before);
    }

    #[test]
    fn erasing_keeps_mask() {
        let mut batch = ones_batch(2, 16, 16, 2);
        let before = batch.clone();
        random_erasing(&mut batch, &ErasingParams::default(), 1.0, StepSeeds::new(5, 0)).unwrap();
        for (a, b) in batch.items().iter().zip(before.items()) {
            assert_eq!(a.mask, b.mask);
        }
    }

    #[test]
    fn hide_and_seek_extremes_and_counts() {
        let mut batch = ones_batch(1, 16, 16, 2);
        let before = batch.clone();
        let grid = GridParams {
            rows: 4,
            cols: 4,
            cell_probability: 0.0,
        };
        hide_and_seek(&mut batch, &grid, 1.0, StepSeeds::new(1, 0)).unwrap();
        assert_eq!(batch, before);

        let grid = GridParams {
            cell_probability: 1.0,
            ..grid
        };
        hide_and_seek(&mut batch, &grid, 1.0, StepSeeds::new(1, 0)).unwrap();
        assert!(batch.items()[0].cube.data().iter().all(|&v| v == 0.0));

        for seed in 0..20 {
            let mut batch = ones_batch(1, 16, 16, 2);
            let grid = GridParams {
                rows: 4,
                cols: 4,
                cell_probability: 0.5,
            };
            let ev = hide_and_seek(&mut batch, &grid, 1.0, StepSeeds::new(seed, 0)).unwrap();
            let k = match &ev[0] {
                AugmentEvent::HiddenCells { cells, .. } => cells.len(),
                e => panic!("{e:?}"),
            };
            let zeros = batch.items()[0].cube.data().iter().filter(|&&v| v == 0.0).count();
            assert_eq!(zeros, k * 4 * 4 * 2);
        }
    }

    #[test]
    fn grid_cells_cover_non_divisible_lengths() {
        let cells = grid_cells(10, 4);
        assert_eq!(cells, vec![(0, 2), (2, 5), (5, 7), (7, 10)]);
    }
}
