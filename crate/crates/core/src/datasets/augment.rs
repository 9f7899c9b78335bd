use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BitemporalSample, Sample};
use crate::error::{Result, StarError};

/// Random geometric augmentation applied identically to an image and its masks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub hflip: bool,
    pub vflip: bool,
    /// Rotate by `90 * k` degrees with `k` uniform in `{0, 1, 2, 3}`.
    pub rotate90: bool,
    /// Uniform scale factor range `[lo, hi]`, `lo <= 1 <= hi`.
    pub scale_jitter: [f32; 2],
    /// Side of the square random crop taken after scaling.
    pub crop: usize,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            hflip: true,
            vflip: true,
            rotate90: true,
            scale_jitter: [0.5, 2.0],
            crop: 256,
        }
    }
}

impl AugmentationConfig {
    /// No flips, no rotation, no scaling, full-size crop.
    pub fn identity(crop: usize) -> Self {
        Self {
            hflip: false,
            vflip: false,
            rotate90: false,
            scale_jitter: [1.0, 1.0],
            crop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_jitter;
        if !(lo > 0.0 && lo <= 1.0 && 1.0 <= hi && hi.is_finite()) {
            return Err(StarError::Config(format!(
                "scale_jitter must satisfy 0 < lo <= 1 <= hi, got [{lo}, {hi}]"
            )));
        }
        if self.crop == 0 {
            return Err(StarError::Config("crop must be positive".into()));
        }
        Ok(())
    }
}

/// One concrete draw of the augmentation parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentPlan {
    pub hflip: bool,
    pub vflip: bool,
    /// Counter-clockwise quarter turns.
    pub quarter_turns: u8,
    pub scaled: (usize, usize),
    pub crop_origin: (usize, usize),
    pub crop: usize,
}

impl AugmentPlan {
    pub fn sample<R: Rng + ?Sized>(cfg: &AugmentationConfig, h: usize, w: usize, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let hflip = cfg.hflip && rng.random_bool(0.5);
        let vflip = cfg.vflip && rng.random_bool(0.5);
        let quarter_turns = if cfg.rotate90 { rng.random_range(0..4u8) } else { 0 };
        let [lo, hi] = cfg.scale_jitter;
        let (rh, rw) = if quarter_turns % 2 == 1 { (w, h) } else { (h, w) };
        // Scales that would shrink the tile below the crop are excluded.
        let lo = lo.max(cfg.crop as f32 / rh.min(rw) as f32);
        if lo > hi {
            return Err(StarError::contract(format!(
                "crop {} does not fit a {h}x{w} tile scaled by at most {hi}",
                cfg.crop
            )));
        }
        let scale = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let scaled = (
            ((rh as f32 * scale).round() as usize).max(cfg.crop),
            ((rw as f32 * scale).round() as usize).max(cfg.crop),
        );
        let crop_origin = (
            rng.random_range(0..=scaled.0 - cfg.crop),
            rng.random_range(0..=scaled.1 - cfg.crop),
        );
        Ok(Self {
            hflip,
            vflip,
            quarter_turns,
            scaled,
            crop_origin,
            crop: cfg.crop,
        })
    }

    fn orient<A: Copy>(&self, plane: ArrayView2<A>) -> Array2<A> {
        let mut v = plane;
        if self.hflip {
            v = v.slice_move(s![.., ..;-1]);
        }
        if self.vflip {
            v = v.slice_move(s![..;-1, ..]);
        }
        for _ in 0..self.quarter_turns {
            v = v.slice_move(s![.., ..;-1]).reversed_axes();
        }
        v.to_owned()
    }

    pub fn apply_image(&self, image: &Array3<f32>) -> Array3<f32> {
        let planes: Vec<Array2<f32>> = image.outer_iter().map(|p| self.orient(p)).collect();
        let views: Vec<_> = planes.iter().map(|p| p.view()).collect();
        let oriented = ndarray::stack(Axis(0), &views).expect("equal plane shapes");
        let (sh, sw) = self.scaled;
        let scaled = if oriented.dim().1 == sh && oriented.dim().2 == sw {
            oriented
        } else {
            let batch = oriented.insert_axis(Axis(0));
            star_nn::resize::resize_bilinear(&batch, sh, sw).index_axis_move(Axis(0), 0)
        };
        self.crop3(scaled.view())
    }

    pub fn apply_mask(&self, mask: &Array2<u8>) -> Array2<u8> {
        let oriented = self.orient(mask.view());
        let (h, w) = oriented.dim();
        let (sh, sw) = self.scaled;
        let (oy, ox) = self.crop_origin;
        let nearest = |o: usize, out: usize, len: usize| ((((o as f64) + 0.5) * len as f64 / out as f64) as usize).min(len - 1);
        Array2::from_shape_fn((self.crop, self.crop), |(y, x)| {
            oriented[[nearest(y + oy, sh, h), nearest(x + ox, sw, w)]]
        })
    }

    fn crop3(&self, a: ArrayView3<f32>) -> Array3<f32> {
        let (oy, ox) = self.crop_origin;
        a.slice(s![.., oy..oy + self.crop, ox..ox + self.crop]).to_owned()
    }
}

pub fn augment<R: Rng + ?Sized>(sample: &Sample, cfg: &AugmentationConfig, rng: &mut R) -> Result<Sample> {
    let (_, h, w) = sample.image.dim();
    let plan = AugmentPlan::sample(cfg, h, w, rng)?;
    Ok(Sample {
        id: sample.id.clone(),
        image: plan.apply_image(&sample.image),
        mask: sample.mask.as_ref().map(|m| plan.apply_mask(m)),
    })
}

/// Same transform for both dates and every mask of the pair.
pub fn augment_pair<R: Rng + ?Sized>(
    pair: &BitemporalSample,
    cfg: &AugmentationConfig,
    rng: &mut R,
) -> Result<BitemporalSample> {
    let (h, w) = pair.size();
    let plan = AugmentPlan::sample(cfg, h, w, rng)?;
    Ok(BitemporalSample {
        id: pair.id.clone(),
        image_t1: plan.apply_image(&pair.image_t1),
        image_t2: plan.apply_image(&pair.image_t2),
        change: plan.apply_mask(&pair.change),
        semantic_t1: pair.semantic_t1.as_ref().map(|m| plan.apply_mask(m)),
        semantic_t2: pair.semantic_t2.as_ref().map(|m| plan.apply_mask(m)),
    })
}
