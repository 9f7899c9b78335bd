use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use star_nn::param::scoped;
use star_nn::resize::{resize_bilinear, resize_bilinear_backward};
use star_nn::{Conv2d, ConvBnRelu, Float, Parameters, Slot};

use super::FeatureMap;
use crate::error::{Result, StarError};

/// What ChangeStar needs from a segmentation model.
///
/// `features` returns the dense map right before the classifier; the change
/// head taps it there. `segment_logits(features(x))` is the model's full
/// single-class forward pass at input resolution. Backward calls must follow
/// a forward pass made with `train = true`, `backward_segment` before
/// `backward_features`.
pub trait Backbone<T: Float>: Parameters<T> + Send {
    fn name(&self) -> &'static str;
    fn config(&self) -> serde_json::Value;
    fn feature_channels(&self) -> usize;
    fn output_stride(&self) -> usize;
    fn features(&mut self, x: &Array4<T>, train: bool) -> FeatureMap<T>;
    fn segment_logits(&mut self, f: &FeatureMap<T>, train: bool) -> Array4<T>;
    /// Returns the gradient with respect to the feature map.
    fn backward_segment(&mut self, d_logits: &Array4<T>) -> Array4<T>;
    fn backward_features(&mut self, d_features: &Array4<T>);
    fn boxed_clone(&self) -> Box<dyn Backbone<T>>;
}

/// Builds a backbone from its registered name and JSON configuration.
pub fn build_backbone<T: Float>(name: &str, config: &serde_json::Value, seed: u64) -> Result<Box<dyn Backbone<T>>> {
    match name {
        ReferenceBackbone::<T>::NAME => {
            let cfg: ReferenceBackboneConfig = serde_json::from_value(config.clone())
                .map_err(|e| StarError::Config(format!("backbone `{name}` config: {e}")))?;
            Ok(Box::new(ReferenceBackbone::<T>::new(cfg, seed)?))
        }
        other => Err(StarError::Config(format!("unknown backbone `{other}`"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceBackboneConfig {
    pub in_channels: usize,
    /// Channels of the first encoder stage; deeper stages use 2x and 4x.
    pub base_width: usize,
    /// Channels of the decoder output (the feature map ChangeMixin reads).
    pub feature_channels: usize,
}

impl Default for ReferenceBackboneConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            base_width: 16,
            feature_channels: 32,
        }
    }
}

/// Small encoder-decoder segmenter with output stride 4.
///
/// Encoder: stride-2 stem, then stages at strides 4, 8 and 16. Decoder:
/// top-down pathway with 1x1 lateral projections and bilinear upsampling,
/// merged at stride 4 and refined by a 3x3 conv block. Classifier: 3x3 conv
/// with one filter followed by bilinear upsampling to the input size.
#[derive(Clone, Debug)]
pub struct ReferenceBackbone<T: Float> {
    cfg: ReferenceBackboneConfig,
    stem: ConvBnRelu<T>,
    down4: ConvBnRelu<T>,
    stage4: ConvBnRelu<T>,
    down8: ConvBnRelu<T>,
    stage8: ConvBnRelu<T>,
    down16: ConvBnRelu<T>,
    lateral4: Conv2d<T>,
    lateral8: Conv2d<T>,
    lateral16: Conv2d<T>,
    fuse: ConvBnRelu<T>,
    classifier: Conv2d<T>,
    sizes: Option<Sizes>,
}

#[derive(Clone, Copy, Debug)]
struct Sizes {
    s4: (usize, usize),
    s8: (usize, usize),
    s16: (usize, usize),
}

impl<T: Float> ReferenceBackbone<T> {
    pub const NAME: &'static str = "fpn-lite";

    pub fn new(cfg: ReferenceBackboneConfig, seed: u64) -> Result<Self> {
        if cfg.in_channels == 0 || cfg.base_width == 0 || cfg.feature_channels == 0 {
            return Err(StarError::Config(format!("backbone widths must be positive: {cfg:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (c, w, d) = (cfg.in_channels, cfg.base_width, cfg.feature_channels);
        Ok(Self {
            cfg,
            stem: ConvBnRelu::new(c, w, 3, 2, &mut rng),
            down4: ConvBnRelu::new(w, 2 * w, 3, 2, &mut rng),
            stage4: ConvBnRelu::new(2 * w, 2 * w, 3, 1, &mut rng),
            down8: ConvBnRelu::new(2 * w, 4 * w, 3, 2, &mut rng),
            stage8: ConvBnRelu::new(4 * w, 4 * w, 3, 1, &mut rng),
            down16: ConvBnRelu::new(4 * w, 4 * w, 3, 2, &mut rng),
            lateral4: Conv2d::new(2 * w, d, 1, 1, 0, true, &mut rng),
            lateral8: Conv2d::new(4 * w, d, 1, 1, 0, true, &mut rng),
            lateral16: Conv2d::new(4 * w, d, 1, 1, 0, true, &mut rng),
            fuse: ConvBnRelu::new(d, d, 3, 1, &mut rng),
            classifier: Conv2d::new(d, 1, 3, 1, 1, true, &mut rng),
            sizes: None,
        })
    }

    pub fn config_struct(&self) -> ReferenceBackboneConfig {
        self.cfg
    }
}

fn hw<T>(a: &Array4<T>) -> (usize, usize) {
    let (_, _, h, w) = a.dim();
    (h, w)
}

impl<T: Float> Backbone<T> for ReferenceBackbone<T> {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn config(&self) -> serde_json::Value {
        serde_json::to_value(self.cfg).expect("plain struct serializes")
    }

    fn feature_channels(&self) -> usize {
        self.cfg.feature_channels
    }

    fn output_stride(&self) -> usize {
        4
    }

    fn features(&mut self, x: &Array4<T>, train: bool) -> FeatureMap<T> {
        let input = hw(x);
        let s = self.stem.forward(x, train);
        let a = self.down4.forward(&s, train);
        let c4 = self.stage4.forward(&a, train);
        let b = self.down8.forward(&c4, train);
        let c8 = self.stage8.forward(&b, train);
        let c16 = self.down16.forward(&c8, train);
        let sizes = Sizes {
            s4: hw(&c4),
            s8: hw(&c8),
            s16: hw(&c16),
        };
        let p16 = self.lateral16.forward(&c16, train);
        let mut p8 = self.lateral8.forward(&c8, train);
        p8 += &resize_bilinear(&p16, sizes.s8.0, sizes.s8.1);
        let mut p4 = self.lateral4.forward(&c4, train);
        p4 += &resize_bilinear(&p8, sizes.s4.0, sizes.s4.1);
        let values = self.fuse.forward(&p4, train);
        self.sizes = Some(sizes);
        FeatureMap {
            values,
            stride: 4,
            input_size: input,
        }
    }

    fn segment_logits(&mut self, f: &FeatureMap<T>, train: bool) -> Array4<T> {
        let z = self.classifier.forward(&f.values, train);
        resize_bilinear(&z, f.input_size.0, f.input_size.1)
    }

    fn backward_segment(&mut self, d_logits: &Array4<T>) -> Array4<T> {
        let sizes = self.sizes.expect("forward before backward");
        let dz = resize_bilinear_backward(d_logits, sizes.s4.0, sizes.s4.1);
        self.classifier.backward(&dz)
    }

    fn backward_features(&mut self, d_features: &Array4<T>) {
        let sizes = self.sizes.expect("forward before backward");
        let dp4 = self.fuse.backward(d_features.clone());
        let mut dc4 = self.lateral4.backward(&dp4);
        let dp8 = resize_bilinear_backward(&dp4, sizes.s8.0, sizes.s8.1);
        let mut dc8 = self.lateral8.backward(&dp8);
        let dp16 = resize_bilinear_backward(&dp8, sizes.s16.0, sizes.s16.1);
        let dc16 = self.lateral16.backward(&dp16);
        dc8 += &self.down16.backward(dc16);
        let db = self.stage8.backward(dc8);
        dc4 += &self.down8.backward(db);
        let da = self.stage4.backward(dc4);
        let ds = self.down4.backward(da);
        self.stem.backward(ds);
    }

    fn boxed_clone(&self) -> Box<dyn Backbone<T>> {
        Box::new(self.clone())
    }
}

impl<T: Float> Parameters<T> for ReferenceBackbone<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.stem.visit(&scoped(prefix, "stem"), f);
        self.down4.visit(&scoped(prefix, "down4"), f);
        self.stage4.visit(&scoped(prefix, "stage4"), f);
        self.down8.visit(&scoped(prefix, "down8"), f);
        self.stage8.visit(&scoped(prefix, "stage8"), f);
        self.down16.visit(&scoped(prefix, "down16"), f);
        self.lateral4.visit(&scoped(prefix, "lateral4"), f);
        self.lateral8.visit(&scoped(prefix, "lateral8"), f);
        self.lateral16.visit(&scoped(prefix, "lateral16"), f);
        self.fuse.visit(&scoped(prefix, "fuse"), f);
        self.classifier.visit(&scoped(prefix, "classifier"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_four_features_and_full_resolution_logits() {
        let cfg = ReferenceBackboneConfig {
            in_channels: 3,
            base_width: 4,
            feature_channels: 8,
        };
        let mut bb = ReferenceBackbone::<f32>::new(cfg, 0).unwrap();
        let x = Array4::from_elem((1, 3, 256, 256), 0.5f32);
        let f = bb.features(&x, false);
        assert_eq!(f.values.dim(), (1, 8, 64, 64));
        assert_eq!(f.stride, 4);
        assert_eq!(bb.segment_logits(&f, false).dim(), (1, 1, 256, 256));
    }

    #[test]
    fn odd_sizes_are_supported() {
        let mut bb = ReferenceBackbone::<f32>::new(ReferenceBackboneConfig::default(), 1).unwrap();
        let x = Array4::from_elem((2, 3, 37, 50), 0.1f32);
        let f = bb.features(&x, true);
        assert_eq!(f.values.dim(), (2, 32, 10, 13));
        assert_eq!(bb.segment_logits(&f, true).dim(), (2, 1, 37, 50));
    }

    #[test]
    fn same_seed_same_weights() {
        let collect = |seed| {
            let mut bb = ReferenceBackbone::<f32>::new(ReferenceBackboneConfig::default(), seed).unwrap();
            let mut all = Vec::new();
            bb.visit("", &mut |_, slot| all.extend(slot.value().iter().map(|v| v.to_bits())));
            all
        };
        assert_eq!(collect(5), collect(5));
        assert_ne!(collect(5), collect(6));
    }

    #[test]
    fn unknown_backbone_is_rejected() {
        assert!(build_backbone::<f32>("resnet", &serde_json::json!({}), 0).is_err());
        let cfg = serde_json::to_value(ReferenceBackboneConfig::default()).unwrap();
        assert!(build_backbone::<f32>("fpn-lite", &cfg, 0).is_ok());
    }
}
