//! ChangeStar: a segmentation backbone plus the ChangeMixin change head, and
//! the post-classification-comparison baseline built from the same backbone.

mod backbone;
mod changestar;
mod checkpoint;
mod mixin;

use ndarray::Array4;

pub use backbone::{build_backbone, Backbone, ReferenceBackbone, ReferenceBackboneConfig};
pub use changestar::{
    pcc_from_logits, pcc_predict, Architecture, ChangeStar, ChangeStarOutput, OutputGrads,
};
pub use checkpoint::{load_checkpoint, read_meta, save_checkpoint, CheckpointMeta, TensorEntry, CHECKPOINT_FORMAT};
pub use mixin::{temporal_swap, ChangeLogits, ChangeMixin, ChangeMixinConfig};

/// Training mode computes batch statistics, caches activations for the
/// backward pass and runs the change head on both temporal orders.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self == Mode::Train
    }
}

/// Dense backbone feature at a reduced resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    /// `N x D x h x w`.
    pub values: Array4<T>,
    /// Nominal output stride (`h ~ H / stride`).
    pub stride: usize,
    /// `H x W` of the image the feature was computed from.
    pub input_size: (usize, usize),
}

impl<T> FeatureMap<T> {
    pub fn batch(&self) -> usize {
        self.values.dim().0
    }

    pub fn channels(&self) -> usize {
        self.values.dim().1
    }
}

/// Pixelwise `sigmoid(logit) > threshold`.
pub fn binarize<T: star_nn::Float>(logits: &ndarray::Array3<T>, threshold: f64) -> ndarray::Array3<u8> {
    logits.mapv(|z| u8::from(sigmoid(z.to_f64().unwrap_or(f64::NAN)) > threshold))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
