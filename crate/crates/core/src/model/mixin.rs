use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use star_nn::ops::{concat_batch, concat_channels, split_batch, split_channels};
use star_nn::param::scoped;
use star_nn::resize::{resize_bilinear, resize_bilinear_backward};
use star_nn::{Conv2d, ConvBnRelu, Float, Parameters, Slot};

use super::{FeatureMap, Mode};
use crate::error::{Result, StarError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChangeMixinConfig {
    /// Number of `3x3 conv -> BN -> ReLU` layers (N).
    pub layers: usize,
    /// Channels of each of those layers (d_c).
    pub width: usize,
}

impl Default for ChangeMixinConfig {
    fn default() -> Self {
        Self { layers: 4, width: 16 }
    }
}

impl ChangeMixinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 {
            return Err(StarError::Config(format!(
                "change head needs at least one layer of positive width, got N={} d_c={}",
                self.layers, self.width
            )));
        }
        Ok(())
    }
}

/// Both temporal orders of a feature pair: `(cat(f1, f2), cat(f2, f1))`.
pub fn temporal_swap<T: Float>(f1: &Array4<T>, f2: &Array4<T>) -> Result<(Array4<T>, Array4<T>)> {
    if f1.dim() != f2.dim() {
        return Err(StarError::contract(format!(
            "temporal features differ in shape: {:?} vs {:?}",
            f1.dim(),
            f2.dim()
        )));
    }
    Ok((concat_channels(f1, f2), concat_channels(f2, f1)))
}

/// Change logits at input resolution. `backward` holds the swapped order
/// (t2 -> t1) and is only computed in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeLogits<T> {
    pub forward: Array4<T>,
    pub backward: Option<Array4<T>>,
}

/// Change head over a pair of dense features.
///
/// The concatenated pair passes through N conv blocks of width d_c, a 3x3
/// projection to one channel and bilinear upsampling to the input size. In
/// training both temporal orders run as one doubled batch, so batch-norm
/// statistics are shared and the two outputs are exact swaps of each other.
#[derive(Clone, Debug)]
pub struct ChangeMixin<T: Float> {
    cfg: ChangeMixinConfig,
    feature_channels: usize,
    blocks: Vec<ConvBnRelu<T>>,
    projection: Conv2d<T>,
    cache: Option<MixinCache>,
}

#[derive(Clone, Copy, Debug)]
struct MixinCache {
    batch: usize,
    feature_size: (usize, usize),
}

impl<T: Float> ChangeMixin<T> {
    pub fn new(feature_channels: usize, cfg: ChangeMixinConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(cfg.layers);
        let mut cin = 2 * feature_channels;
        for _ in 0..cfg.layers {
            blocks.push(ConvBnRelu::new(cin, cfg.width, 3, 1, &mut rng));
            cin = cfg.width;
        }
        let projection = Conv2d::new(cfg.width, 1, 3, 1, 1, true, &mut rng);
        Ok(Self {
            cfg,
            feature_channels,
            blocks,
            projection,
            cache: None,
        })
    }

    pub fn config(&self) -> ChangeMixinConfig {
        self.cfg
    }

    pub fn forward(&mut self, f1: &FeatureMap<T>, f2: &FeatureMap<T>, mode: Mode) -> Result<ChangeLogits<T>> {
        if f1.input_size != f2.input_size {
            return Err(StarError::contract("temporal features come from different image sizes"));
        }
        if f1.channels() != self.feature_channels {
            return Err(StarError::contract(format!(
                "change head expects {} feature channels, got {}",
                self.feature_channels,
                f1.channels()
            )));
        }
        let (a, b) = temporal_swap(&f1.values, &f2.values)?;
        let n = f1.batch();
        let train = mode.is_train();
        let input = if train { concat_batch(&a, &b) } else { a };
        let (_, _, h, w) = input.dim();
        let mut z = input;
        for block in &mut self.blocks {
            z = block.forward(&z, train);
        }
        let z = self.projection.forward(&z, train);
        let (out_h, out_w) = f1.input_size;
        let logits = resize_bilinear(&z, out_h, out_w);
        self.cache = train.then_some(MixinCache {
            batch: n,
            feature_size: (h, w),
        });
        if train {
            let (fwd, bwd) = split_batch(&logits, n);
            Ok(ChangeLogits {
                forward: fwd,
                backward: Some(bwd),
            })
        } else {
            Ok(ChangeLogits {
                forward: logits,
                backward: None,
            })
        }
    }

    /// Gradients of both change outputs back to `(df1, df2)`.
    pub fn backward(&mut self, d_forward: &Array4<T>, d_backward: &Array4<T>) -> (Array4<T>, Array4<T>) {
        let cache = self.cache.take().expect("ChangeMixin::backward needs a training forward pass");
        let d = concat_batch(d_forward, d_backward);
        let (h, w) = cache.feature_size;
        let dz = resize_bilinear_backward(&d, h, w);
        let mut dz = self.projection.backward(&dz);
        for block in self.blocks.iter_mut().rev() {
            dz = block.backward(dz);
        }
        let (da, db) = split_batch(&dz, cache.batch);
        let (da1, da2) = split_channels(&da, self.feature_channels);
        let (db2, db1) = split_channels(&db, self.feature_channels);
        (da1 + db1, da2 + db2)
    }
}

impl<T: Float> Parameters<T> for ChangeMixin<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&scoped(prefix, &format!("block{i}")), f);
        }
        self.projection.visit(&scoped(prefix, "projection"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn features(seed: u64, n: usize, d: usize) -> FeatureMap<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureMap {
            values: Array4::from_shape_fn((n, d, 6, 5), |_| rng.random_range(-1.0..1.0)),
            stride: 4,
            input_size: (24, 20),
        }
    }

    #[test]
    fn parameter_count_matches_hand_count() {
        // Two blocks: (16*16*9 conv + 2*16 bn) each; projection 16*9 + 1.
        let mut m = ChangeMixin::<f32>::new(8, ChangeMixinConfig { layers: 2, width: 16 }, 0).unwrap();
        assert_eq!(m.num_params(), 2 * (16 * 16 * 9 + 32) + 16 * 9 + 1);
        assert_eq!(m.num_params(), 4817);
    }

    #[test]
    fn swapped_inputs_swap_outputs_exactly() {
        for seed in 0..3 {
            let f1 = features(10 + seed, 3, 4);
            let f2 = features(20 + seed, 3, 4);
            let mut m = ChangeMixin::<f32>::new(4, ChangeMixinConfig::default(), seed).unwrap();
            let a = m.forward(&f1, &f2, Mode::Train).unwrap();
            let b = m.forward(&f2, &f1, Mode::Train).unwrap();
            assert_eq!(a.forward, b.backward.unwrap());
            assert_eq!(a.backward.unwrap(), b.forward);
        }
    }

    #[test]
    fn infer_runs_one_order() {
        let mut m = ChangeMixin::<f32>::new(4, ChangeMixinConfig::default(), 1).unwrap();
        let out = m.forward(&features(1, 2, 4), &features(2, 2, 4), Mode::Infer).unwrap();
        assert_eq!(out.forward.dim(), (2, 1, 24, 20));
        assert!(out.backward.is_none());
    }

    #[test]
    fn temporal_swap_rejects_mismatched_shapes() {
        let a = Array4::<f32>::zeros((1, 2, 3, 3));
        let b = Array4::<f32>::zeros((1, 2, 3, 4));
        assert!(temporal_swap(&a, &b).is_err());
        let (x, y) = temporal_swap(&a, &a.mapv(|_| 1.0)).unwrap();
        assert_eq!(x.dim(), (1, 4, 3, 3));
        assert_eq!(x[[0, 2, 0, 0]], 1.0);
        assert_eq!(y[[0, 0, 0, 0]], 1.0);
    }

    #[test]
    fn zero_layers_is_a_config_error() {
        assert!(ChangeMixin::<f32>::new(4, ChangeMixinConfig { layers: 0, width: 16 }, 0).is_err());
    }
}
