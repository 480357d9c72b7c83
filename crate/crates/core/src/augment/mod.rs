//! Seedable augmentations on batches of label-aligned (cube, mask) pairs.
//!
//! Every operation mutates a [`Batch`] in place and returns the events it
//! produced; [`compose`] wraps a whole [`Pipeline`] as a pure function.
//! Cubes are resampled bilinearly and masks nearest-neighbour; masks only ever
//! receive labels already present in the batch or [`INVALID_LABEL`](crate::cube::INVALID_LABEL).

mod geometric;
mod mixing;
mod noise;
mod pipeline;
pub mod rng;

use serde::{Deserialize, Serialize};

use crate::cube::{HsiCube, SegmentationMask};
use crate::error::{Error, Result};

pub use geometric::{elastic, elastic_displacement, geometric_baseline, warp_affine, AffineParams};
pub use mixing::{cutmix, jigsaw, organ_transplantation, paste_rect, swap_rect};
pub use noise::{erase_rect, grid_cells, hide_and_seek, random_erasing};
pub use pipeline::{compose, AugmentLog, LogEntry, Pipeline};
pub use rng::{RngStream, StepSeeds};

/// Probabilities explored when tuning `p`.
pub const PROBABILITY_GRID: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];

/// Upper limits of the geometric baseline.
pub const MAX_SHIFT_FRACTION: f64 = 0.0625;
pub const MAX_SCALE_DEVIATION: f64 = 0.1;
pub const MAX_ROTATION_DEG: f64 = 45.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Item {
    pub cube: HsiCube,
    pub mask: SegmentationMask,
}

impl Item {
    pub fn new(cube: HsiCube, mask: SegmentationMask) -> Result<Self> {
        mask.check_matches_cube(&cube)?;
        Ok(Self { cube, mask })
    }
}

/// Items sharing one spatial shape and one wavelength axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    items: Vec<Item>,
}

impl Batch {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        if let Some(first) = items.first() {
            for (i, it) in items.iter().enumerate() {
                it.mask.check_matches_cube(&it.cube)?;
                if !first.cube.same_layout(&it.cube) {
                    return Err(Error::Structural(format!(
                        "batch item {i} has shape {}x{}x{}, item 0 has {}x{}x{}",
                        it.cube.height(),
                        it.cube.width(),
                        it.cube.channels(),
                        first.cube.height(),
                        first.cube.width(),
                        first.cube.channels()
                    )));
                }
            }
        }
        Ok(Self { items })
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn items_mut(&mut self) -> &mut [Item] {
        &mut self.items
    }

    pub fn into_items(self) -> Vec<Item> {
        self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub(crate) fn require_mixable(&self, op: &str) -> Result<()> {
        if self.items.len() < 2 {
            Err(Error::Structural(format!(
                "{op} mixes images within a batch and requires at least two images, got {}",
                self.items.len()
            )))
        } else {
            Ok(())
        }
    }
}

/// Half-open pixel rectangle `[row0, row1) x [col0, col1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row0: usize,
    pub row1: usize,
    pub col0: usize,
    pub col1: usize,
}

impl Rect {
    pub fn new(row0: usize, row1: usize, col0: usize, col1: usize) -> Self {
        Self { row0, row1, col0, col1 }
    }

    pub fn area(&self) -> usize {
        self.row1.saturating_sub(self.row0) * self.col1.saturating_sub(self.col0)
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.row0 && y < self.row1 && x >= self.col0 && x < self.col1
    }

    /// Clipped to a `height x width` image.
    pub fn clip(&self, height: usize, width: usize) -> Rect {
        Rect {
            row0: self.row0.min(height),
            row1: self.row1.min(height),
            col0: self.col0.min(width),
            col1: self.col1.min(width),
        }
    }
}

/// What an augmentation did to one image (or pair of images).
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum AugmentEvent {
    Geometric {
        image: usize,
        params: AffineParams,
    },
    Elastic {
        image: usize,
        alpha_px: f64,
        sigma: f64,
    },
    Erased {
        image: usize,
        rect: Rect,
    },
    HiddenCells {
        image: usize,
        cells: Vec<(usize, usize)>,
    },
    CutMix {
        recipient: usize,
        donor: usize,
        rect: Rect,
    },
    JigsawSwap {
        cell: (usize, usize),
        first: usize,
        second: usize,
    },
    Transplant {
        recipient: usize,
        donor: usize,
        class: u8,
        pixel_count: usize,
    },
    Skipped {
        image: usize,
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometricParams {
    /// Maximum shift as a fraction of the image height/width.
    pub shift_limit: f64,
    /// Scale factor is drawn from `[1 - scale_limit, 1 + scale_limit]`.
    pub scale_limit: f64,
    /// Maximum absolute rotation in degrees.
    pub rotate_limit: f64,
}

impl Default for GeometricParams {
    fn default() -> Self {
        Self {
            shift_limit: MAX_SHIFT_FRACTION,
            scale_limit: MAX_SCALE_DEVIATION,
            rotate_limit: MAX_ROTATION_DEG,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticParams {
    /// Maximum displacement as a fraction of the image diagonal.
    pub alpha: f64,
    /// Gaussian smoothing of the displacement noise, in pixels.
    pub sigma: f64,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            sigma: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErasingParams {
    /// Range of the erased area as a fraction of the image area.
    pub area: (f64, f64),
    /// Range of the rectangle's height/width ratio (sampled log-uniformly).
    pub aspect: (f64, f64),
}

impl Default for ErasingParams {
    fn default() -> Self {
        Self {
            area: (0.02, 0.33),
            aspect: (0.3, 3.3),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub rows: usize,
    pub cols: usize,
    /// Per-cell probability of being hidden (hide-and-seek) or swapped (jigsaw).
    pub cell_probability: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            rows: 4,
            cols: 4,
            cell_probability: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutMixParams {
    /// Range of the pasted rectangle's area as a fraction of the image area.
    pub area: (f64, f64),
}

impl Default for CutMixParams {
    fn default() -> Self {
        Self { area: (0.0, 1.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransplantParams {
    /// Number of donor classes moved into each selected recipient.
    pub classes_per_recipient: usize,
    pub include_background: bool,
    pub background_label: u8,
}

impl Default for TransplantParams {
    fn default() -> Self {
        Self {
            classes_per_recipient: 1,
            include_background: true,
            background_label: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationKind {
    Geometric(GeometricParams),
    Elastic(ElasticParams),
    RandomErasing(ErasingParams),
    HideAndSeek(GridParams),
    Cutmix(CutMixParams),
    Jigsaw(GridParams),
    OrganTransplantation(TransplantParams),
}

impl AugmentationKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmentationKind::Geometric(_) => "geometric",
            AugmentationKind::Elastic(_) => "elastic",
            AugmentationKind::RandomErasing(_) => "random_erasing",
            AugmentationKind::HideAndSeek(_) => "hide_and_seek",
            AugmentationKind::Cutmix(_) => "cutmix",
            AugmentationKind::Jigsaw(_) => "jigsaw",
            AugmentationKind::OrganTransplantation(_) => "organ_transplantation",
        }
    }

    /// Default probability: 0.5 per geometric sub-transform, 1.0 otherwise.
    pub fn default_probability(&self) -> f64 {
        match self {
            AugmentationKind::Geometric(_) => 0.5,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let range = |name: &str, v: f64, lo: f64, hi: f64| -> Result<()> {
            if v >= lo && v <= hi {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} = {v} outside [{lo}, {hi}]")))
            }
        };
        match self {
            AugmentationKind::Geometric(g) => {
                range("shift_limit", g.shift_limit, 0.0, MAX_SHIFT_FRACTION)?;
                range("scale_limit", g.scale_limit, 0.0, MAX_SCALE_DEVIATION)?;
                range("rotate_limit", g.rotate_limit, 0.0, MAX_ROTATION_DEG)
            }
            AugmentationKind::Elastic(e) => {
                if !(e.sigma > 0.0) || !e.sigma.is_finite() {
                    return Err(Error::Parameter(format!("elastic sigma must be > 0, got {}", e.sigma)));
                }
                if !(e.alpha >= 0.0) || !e.alpha.is_finite() {
                    return Err(Error::Parameter(format!("elastic alpha must be >= 0, got {}", e.alpha)));
                }
                Ok(())
            }
            AugmentationKind::RandomErasing(r) => {
                let (lo, hi) = r.area;
                if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "erasing area range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
                    )));
                }
                let (alo, ahi) = r.aspect;
                if !(alo > 0.0 && alo <= ahi && ahi.is_finite()) {
                    return Err(Error::Parameter(format!(
                        "erasing aspect range ({alo}, {ahi}) must satisfy 0 < lo <= hi"
                    )));
                }
                Ok(())
            }
            AugmentationKind::HideAndSeek(g) | AugmentationKind::Jigsaw(g) => {
                if g.rows < 1 || g.cols < 1 {
                    return Err(Error::Parameter(format!(
                        "grid must be at least 1x1, got {}x{}",
                        g.rows, g.cols
                    )));
                }
                range("cell_probability", g.cell_probability, 0.0, 1.0)
            }
            AugmentationKind::Cutmix(c) => {
                let (lo, hi) = c.area;
                if !(lo >= 0.0 && lo <= hi && hi <= 1.0) {
                    return Err(Error::Parameter(format!(
                        "cutmix area range ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"
                    )));
                }
                Ok(())
            }
            AugmentationKind::OrganTransplantation(t) => {
                if t.classes_per_recipient < 1 {
                    return Err(Error::Parameter("classes_per_recipient must be >= 1".into()));
                }
                Ok(())
            }
        }
    }
}

/// One validated pipeline step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct AugmentationSpec {
    kind: AugmentationKind,
    probability: f64,
    seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(flatten)]
    kind: AugmentationKind,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl TryFrom<RawSpec> for AugmentationSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        let p = raw.p.unwrap_or_else(|| raw.kind.default_probability());
        let mut spec = AugmentationSpec::new(raw.kind, p)?;
        spec.seed = raw.seed;
        Ok(spec)
    }
}

impl From<AugmentationSpec> for RawSpec {
    fn from(s: AugmentationSpec) -> Self {
        Self {
            kind: s.kind,
            p: Some(s.probability),
            seed: s.seed,
        }
    }
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, probability: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(Error::Parameter(format!("probability {probability} outside [0, 1]")));
        }
        kind.validate()?;
        Ok(Self {
            kind,
            probability,
            seed: None,
        })
    }

    /// Spec with the kind's default parameters and probability.
    pub fn with_defaults(kind: AugmentationKind) -> Result<Self> {
        let p = kind.default_probability();
        Self::new(kind, p)
    }

    /// Pins this step to its own master seed instead of the pipeline's.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn kind(&self) -> &AugmentationKind {
        &self.kind
    }

    pub fn probability(&self) -> f64 {
        self.probability
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Applies this step in place.
    pub fn apply(&self, batch: &mut Batch, seeds: StepSeeds) -> Result<Vec<AugmentEvent>> {
        let p = self.probability;
        match &self.kind {
            AugmentationKind::Geometric(g) => geometric_baseline(batch, g, p, seeds),
            AugmentationKind::Elastic(e) => elastic(batch, e, p, seeds),
            AugmentationKind::RandomErasing(r) => random_erasing(batch, r, p, seeds),
            AugmentationKind::HideAndSeek(g) => hide_and_seek(batch, g, p, seeds),
            AugmentationKind::Cutmix(c) => cutmix(batch, c, p, seeds),
            AugmentationKind::Jigsaw(g) => jigsaw(batch, g, p, seeds),
            AugmentationKind::OrganTransplantation(t) => organ_transplantation(batch, t, p, seeds),
        }
    }
}
