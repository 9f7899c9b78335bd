//! Tile corpora: in-memory sample types, the on-disk PNG layout, the
//! synthetic scene generator and training augmentations.
//!
//! On-disk layout (all tiles 8-bit PNG, masks single-channel `{0,255}`):
//!
//! ```text
//! single-temporal root/          bitemporal root/
//!   manifest.json                  manifest.json
//!   images/{id}.png  (RGB)         t1/{id}.png      (RGB)
//!   masks/{id}.png   (L)           t2/{id}.png      (RGB)
//!                                  change/{id}.png  (L)
//!                                  sem_t1/{id}.png  (L, optional)
//!                                  sem_t2/{id}.png  (L, optional)
//! ```
//!
//! `manifest.json` is `{"format": "star-tiles/v1", "kind": "single_temporal" |
//! "bitemporal", "samples": [{"id": ..., "split": "train" | "eval"}]}`. When it
//! is absent, ids are the sorted file stems of `images/` (or `t1/`).

mod augment;
mod io;
mod synthetic;

use ndarray::{Array2, Array3, Array4, Axis};

pub use augment::{augment, augment_pair, AugmentPlan, AugmentationConfig};
pub use io::{
    load_bitemporal, load_single_temporal, read_mask, read_rgb, write_bitemporal, write_mask, write_rgb,
    write_single_temporal, BitemporalDir, DatasetKind, Manifest, ManifestEntry, SingleTemporalDir, Split,
    MANIFEST_FILE, MANIFEST_FORMAT,
};
pub use synthetic::{generate_synthetic, ShapeKind, SyntheticData, SyntheticSceneSpec};

use crate::error::{Result, StarError};

/// One single-temporal tile. `image` is `C x H x W` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Array3<f32>,
    pub mask: Option<Array2<u8>>,
}

/// A co-registered image pair with its change mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BitemporalSample {
    pub id: String,
    pub image_t1: Array3<f32>,
    pub image_t2: Array3<f32>,
    pub change: Array2<u8>,
    pub semantic_t1: Option<Array2<u8>>,
    pub semantic_t2: Option<Array2<u8>>,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Array3<f32>, mask: Option<Array2<u8>>) -> Result<Self> {
        let s = Self {
            id: id.into(),
            image,
            mask,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (_, h, w) = self.image.dim();
        if let Some(mask) = &self.mask {
            check_mask(&self.id, mask, (h, w))?;
        }
        Ok(())
    }
}

impl BitemporalSample {
    pub fn validate(&self) -> Result<()> {
        let (_, h, w) = self.image_t1.dim();
        if self.image_t2.dim() != self.image_t1.dim() {
            return Err(StarError::Ingestion {
                id: self.id.clone(),
                reason: format!("t1 {:?} and t2 {:?} differ in shape", self.image_t1.dim(), self.image_t2.dim()),
            });
        }
        check_mask(&self.id, &self.change, (h, w))?;
        for m in self.semantic_t1.iter().chain(self.semantic_t2.iter()) {
            check_mask(&self.id, m, (h, w))?;
        }
        Ok(())
    }

    pub fn size(&self) -> (usize, usize) {
        let (_, h, w) = self.image_t1.dim();
        (h, w)
    }
}

fn check_mask(id: &str, mask: &Array2<u8>, hw: (usize, usize)) -> Result<()> {
    if mask.dim() != hw {
        return Err(StarError::Ingestion {
            id: id.to_string(),
            reason: format!("mask {:?} does not match image {:?}", mask.dim(), hw),
        });
    }
    if let Some(&value) = mask.iter().find(|&&v| v > 1) {
        return Err(StarError::NonBinaryMask {
            id: id.to_string(),
            value,
        });
    }
    Ok(())
}

/// Stacks equally sized images into an `N x C x H x W` batch.
pub fn stack_images<'a>(images: impl IntoIterator<Item = &'a Array3<f32>>) -> Result<Array4<f32>> {
    let views: Vec<_> = images.into_iter().map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| StarError::contract(format!("cannot stack images: {e}")))
}

pub fn stack_masks<'a>(masks: impl IntoIterator<Item = &'a Array2<u8>>) -> Result<Array3<u8>> {
    let views: Vec<_> = masks.into_iter().map(|a| a.view()).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| StarError::contract(format!("cannot stack masks: {e}")))
}
