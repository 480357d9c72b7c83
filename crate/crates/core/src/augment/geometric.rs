//! Spatial resampling: the shift/scale/rotate baseline and elastic deformation.

use rayon::prelude::*;
use serde::Serialize;

use super::{AugmentEvent, Batch, ElasticParams, GeometricParams, Item, StepSeeds};
use crate::augment::rng::RngStream;
use crate::cube::INVALID_LABEL;
use crate::error::Result;

/// One sampled similarity transform about the image centre.
///
/// Shifts are fractions of the image width/height and are snapped to whole
/// pixels, so a pure shift moves content by exactly `round(shift * size)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AffineParams {
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub angle_deg: f64,
}

impl Default for AffineParams {
    fn default() -> Self {
        Self {
            shift_x: 0.0,
            shift_y: 0.0,
            scale: 1.0,
            angle_deg: 0.0,
        }
    }
}

impl AffineParams {
    pub fn is_identity(&self) -> bool {
        *self == AffineParams::default()
    }

    fn pixel_shift(&self, height: usize, width: usize) -> (i64, i64) {
        (
            (self.shift_x * width as f64).round() as i64,
            (self.shift_y * height as f64).round() as i64,
        )
    }
}

/// Resamples `item` through `source_of(y, x) -> (sy, sx)`: bilinear for the cube,
/// nearest for the mask. Pixels whose nearest source lies outside the image
/// become 0 / invalid.
fn warp_with<F>(item: &Item, source_of: F) -> Item
where
    F: Fn(usize, usize) -> (f64, f64) + Sync,
{
    let (h, w, c) = (item.cube.height(), item.cube.width(), item.cube.channels());
    let src = item.cube.data();
    let src_mask = item.mask.labels();
    let mut data = vec![0f32; h * w * c];
    let mut labels = vec![INVALID_LABEL; h * w];
    let (hmax, wmax) = ((h - 1) as f64, (w - 1) as f64);

    data.par_chunks_mut(w * c)
        .zip(labels.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, row_labels))| {
            for x in 0..w {
                let (sy, sx) = source_of(y, x);
                let (ny, nx) = (sy.round(), sx.round());
                if !(ny >= 0.0 && ny <= hmax && nx >= 0.0 && nx <= wmax) {
                    continue;
                }
                row_labels[x] = src_mask[ny as usize * w + nx as usize];

                let (cy, cx) = (sy.clamp(0.0, hmax), sx.clamp(0.0, wmax));
                let (y0, x0) = (cy.floor() as usize, cx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (fy, fx) = ((cy - y0 as f64) as f32, (cx - x0 as f64) as f32);
                let out = &mut row[x * c..(x + 1) * c];
                let p00 = &src[(y0 * w + x0) * c..][..c];
                if fy == 0.0 && fx == 0.0 {
                    out.copy_from_slice(p00);
                    continue;
                }
                let p01 = &src[(y0 * w + x1) * c..][..c];
                let p10 = &src[(y1 * w + x0) * c..][..c];
                let p11 = &src[(y1 * w + x1) * c..][..c];
                for k in 0..c {
                    let top = p00[k] + (p01[k] - p00[k]) * fx;
                    let bottom = p10[k] + (p11[k] - p10[k]) * fx;
                    out[k] = top + (bottom - top) * fy;
                }
            }
        });

    Item {
        cube: item.cube.with_data(data),
        mask: crate::cube::SegmentationMask::new(h, w, labels).expect("shape preserved"),
    }
}

/// Applies one similarity transform to a (cube, mask) pair.
pub fn warp_affine(item: &Item, params: &AffineParams) -> Item {
    if params.is_identity() {
        return item.clone();
    }
    let (h, w) = (item.cube.height(), item.cube.width());
    let (tx, ty) = params.pixel_shift(h, w);
    if params.scale == 1.0 && params.angle_deg == 0.0 {
        return warp_with(item, |y, x| (y as f64 - ty as f64, x as f64 - tx as f64));
    }
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let theta = params.angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let inv_scale = 1.0 / params.scale;
    // inverse map: src = c + R(-theta) (out - c - t) / s
    warp_with(item, move |y, x| {
        let dx = x as f64 - cx - tx as f64;
        let dy = y as f64 - cy - ty as f64;
        let sx = cx + (cos * dx + sin * dy) * inv_scale;
        let sy = cy + (-sin * dx + cos * dy) * inv_scale;
        (sy, sx)
    })
}

fn sample_affine(rng: &mut RngStream, g: &GeometricParams, p: f64) -> AffineParams {
    let mut params = AffineParams::default();
    if rng.bernoulli(p) {
        params.shift_x = rng.uniform(-g.shift_limit, g.shift_limit);
        params.shift_y = rng.uniform(-g.shift_limit, g.shift_limit);
    }
    if rng.bernoulli(p) {
        params.scale = rng.uniform(1.0 - g.scale_limit, 1.0 + g.scale_limit);
    }
    if rng.bernoulli(p) {
        params.angle_deg = rng.uniform(-g.rotate_limit, g.rotate_limit);
    }
    params
}

/// Shift, scale and rotate, each drawn independently per image with probability `p`.
pub fn geometric_baseline(
    batch: &mut Batch,
    params: &GeometricParams,
    p: f64,
    seeds: StepSeeds,
) -> Result<Vec<AugmentEvent>> {
    let events = batch
        .items_mut()
        .par_iter_mut()
        .enumerate()
        .map(|(i, item)| {
            let mut rng = seeds.image(i);
            let affine = sample_affine(&mut rng, params, p);
            if affine.is_identity() {
                return None;
            }
            *item = warp_affine(item, &affine);
            Some(AugmentEvent::Geometric {
                image: i,
                params: affine,
            })
        })
        .collect::<Vec<_>>();
    Ok(events.into_iter().flatten().collect())
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge clamping.
fn blur(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut tmp = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let xx = (x as i64 + j as i64 - r).clamp(0, w as i64 - 1) as usize;
                acc += kv * field[y * w + xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                let yy = (y as i64 + j as i64 - r).clamp(0, h as i64 - 1) as usize;
                acc += kv * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Smoothed random displacement fields `(dy, dx)` scaled so that the largest
/// component magnitude equals `alpha_px`.
pub fn elastic_displacement(
    rng: &mut RngStream,
    height: usize,
    width: usize,
    alpha_px: f64,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = height * width;
    let noise_y: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let noise_x: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let kernel = gaussian_kernel(sigma);
    let mut dy = blur(&noise_y, height, width, &kernel);
    let mut dx = blur(&noise_x, height, width, &kernel);
    let peak = dy.iter().chain(dx.iter()).fold(0f64, |m, v| m.max(v.abs()));
    let factor = if peak > 0.0 { alpha_px / peak } else { 0.0 };
    dy.iter_mut().chain(dx.iter_mut()).for_each(|v| *v *= factor);
    (dy, dx)
}

/// Elastic deformation with probability `p` per image.
pub fn elastic(batch: &mut Batch, params: &ElasticParams, p: f64, seeds: StepSeeds) -> Result<Vec<AugmentEvent>> {
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
            let alpha_px = params.alpha * ((h * h + w * w) as f64).sqrt();
            if alpha_px == 0.0 {
                return None;
            }
            let (dy, dx) = elastic_displacement(&mut rng, h, w, alpha_px, params.sigma);
            *item = warp_with(item, |y, x| {
                let k = y * w + x;
                (y as f64 + dy[k], x as f64 + dx[k])
            });
            Some(AugmentEvent::Elastic {
                image: i,
                alpha_px,
                sigma: params.sigma,
            })
        })
        .collect::<Vec<_>>();
    Ok(events.into_iter().flatten().collect())
}
