use ndarray::{Array3, Array4, Axis};
use serde::{Deserialize, Serialize};
use star_nn::ops::{concat_batch, gather_batch, scatter_add_batch, split_batch};
use star_nn::param::scoped;
use star_nn::{Float, Parameters, Slot};

use super::backbone::{build_backbone, Backbone, ReferenceBackbone, ReferenceBackboneConfig};
use super::mixin::{ChangeLogits, ChangeMixin, ChangeMixinConfig};
use super::{sigmoid, FeatureMap, Mode};
use crate::error::{Result, StarError};
use crate::pairing::Derangement;

/// Everything needed to rebuild a ChangeStar with identical parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub backbone: String,
    pub backbone_config: serde_json::Value,
    pub mixin: ChangeMixinConfig,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            backbone: ReferenceBackbone::<f32>::NAME.to_string(),
            backbone_config: serde_json::to_value(ReferenceBackboneConfig::default()).expect("serializable"),
            mixin: ChangeMixinConfig::default(),
        }
    }
}

/// Logits of one forward pass. Segmentation logits are `N x 1 x H x W`.
#[derive(Clone, Debug)]
pub struct ChangeStarOutput<T> {
    pub seg_t1: Array4<T>,
    pub seg_t2: Array4<T>,
    pub change: ChangeLogits<T>,
}

/// Loss gradients with respect to each output of [`ChangeStarOutput`].
#[derive(Clone, Debug)]
pub struct OutputGrads<T> {
    pub seg_t1: Option<Array4<T>>,
    pub seg_t2: Option<Array4<T>>,
    pub change_forward: Option<Array4<T>>,
    pub change_backward: Option<Array4<T>>,
}

enum Route {
    /// Backbone ran on `[x1; x2]`.
    Pair,
    /// Backbone ran on `x` once; `x2 = x[perm]`.
    Pseudo { perm: Vec<usize> },
    /// Segmentation only.
    Single,
}

struct ForwardCache<T> {
    route: Route,
    features: Array4<T>,
    change: bool,
}

/// A segmentation backbone with a ChangeMixin head on its dense features.
pub struct ChangeStar<T: Float> {
    architecture: Architecture,
    backbone: Box<dyn Backbone<T>>,
    mixin: ChangeMixin<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Float> Clone for ChangeStar<T> {
    fn clone(&self) -> Self {
        Self {
            architecture: self.architecture.clone(),
            backbone: self.backbone.boxed_clone(),
            mixin: self.mixin.clone(),
            cache: None,
        }
    }
}

impl<T: Float> std::fmt::Debug for ChangeStar<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChangeStar").field("architecture", &self.architecture).finish()
    }
}

impl<T: Float> ChangeStar<T> {
    pub fn new(architecture: Architecture, seed: u64) -> Result<Self> {
        let backbone = build_backbone::<T>(&architecture.backbone, &architecture.backbone_config, seed)?;
        let mixin = ChangeMixin::new(
            backbone.feature_channels(),
            architecture.mixin,
            seed.wrapping_add(0x9E37_79B9_7F4A_7C15),
        )?;
        Ok(Self {
            architecture,
            backbone,
            mixin,
            cache: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn backbone_mut(&mut self) -> &mut dyn Backbone<T> {
        self.backbone.as_mut()
    }

    pub fn mixin_mut(&mut self) -> &mut ChangeMixin<T> {
        &mut self.mixin
    }

    fn check_input(&self, x: &Array4<T>) -> Result<()> {
        let (n, c, h, w) = x.dim();
        if n == 0 || h == 0 || w == 0 {
            return Err(StarError::contract(format!("empty input batch {:?}", x.dim())));
        }
        let expected = self.architecture.backbone_config.get("in_channels").and_then(|v| v.as_u64());
        if let Some(e) = expected {
            if e as usize != c {
                return Err(StarError::contract(format!("model expects {e} input channels, got {c}")));
            }
        }
        Ok(())
    }

    /// Real bitemporal pair. Both dates share backbone statistics.
    pub fn forward_pair(&mut self, x1: &Array4<T>, x2: &Array4<T>, mode: Mode) -> Result<ChangeStarOutput<T>> {
        if x1.dim() != x2.dim() {
            return Err(StarError::contract(format!(
                "bitemporal inputs differ in shape: {:?} vs {:?}",
                x1.dim(),
                x2.dim()
            )));
        }
        self.check_input(x1)?;
        let n = x1.dim().0;
        let train = mode.is_train();
        let f = self.backbone.features(&concat_batch(x1, x2), train);
        let seg = self.backbone.segment_logits(&f, train);
        let (seg_t1, seg_t2) = split_batch(&seg, n);
        let (v1, v2) = split_batch(&f.values, n);
        let f1 = FeatureMap { values: v1, ..f.clone() };
        let f2 = FeatureMap { values: v2, ..f.clone() };
        let change = self.mixin.forward(&f1, &f2, mode)?;
        self.cache = train.then(|| ForwardCache {
            route: Route::Pair,
            features: f.values,
            change: true,
        });
        Ok(ChangeStarOutput { seg_t1, seg_t2, change })
    }

    /// Pseudo pair `(x, x[perm])`: the backbone runs once and the second
    /// date's features and logits are gathered through the permutation.
    pub fn forward_pseudo(&mut self, x: &Array4<T>, perm: &Derangement, mode: Mode) -> Result<ChangeStarOutput<T>> {
        self.check_input(x)?;
        if perm.len() != x.dim().0 {
            return Err(StarError::contract(format!(
                "permutation of length {} for batch of {}",
                perm.len(),
                x.dim().0
            )));
        }
        let train = mode.is_train();
        let f = self.backbone.features(x, train);
        let seg_t1 = self.backbone.segment_logits(&f, train);
        let seg_t2 = gather_batch(&seg_t1, perm.as_slice());
        let f2 = FeatureMap {
            values: gather_batch(&f.values, perm.as_slice()),
            ..f.clone()
        };
        let change = self.mixin.forward(&f, &f2, mode)?;
        self.cache = train.then(|| ForwardCache {
            route: Route::Pseudo {
                perm: perm.as_slice().to_vec(),
            },
            features: f.values,
            change: true,
        });
        Ok(ChangeStarOutput { seg_t1, seg_t2, change })
    }

    /// Single-date semantic logits, `N x 1 x H x W`.
    pub fn forward_segmentation(&mut self, x: &Array4<T>, mode: Mode) -> Result<Array4<T>> {
        self.check_input(x)?;
        let train = mode.is_train();
        let f = self.backbone.features(x, train);
        let seg = self.backbone.segment_logits(&f, train);
        self.cache = train.then(|| ForwardCache {
            route: Route::Single,
            features: f.values,
            change: false,
        });
        Ok(seg)
    }

    /// Accumulates parameter gradients for the last training forward pass.
    /// Missing entries count as zero.
    pub fn backward(&mut self, grads: &OutputGrads<T>) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| StarError::contract("backward without a training forward pass"))?;
        let zeros = || Array4::<T>::zeros(cache.features.dim());
        let (d_f1, d_f2) = if cache.change {
            match (&grads.change_forward, &grads.change_backward) {
                (None, None) => (None, None),
                (fwd, bwd) => {
                    let like = fwd.as_ref().or(bwd.as_ref()).expect("one side is present");
                    let z = Array4::<T>::zeros(like.dim());
                    let (a, b) = self.mixin.backward(fwd.as_ref().unwrap_or(&z), bwd.as_ref().unwrap_or(&z));
                    (Some(a), Some(b))
                }
            }
        } else {
            if grads.change_forward.is_some() || grads.change_backward.is_some() {
                return Err(StarError::contract("change gradients for a segmentation-only pass"));
            }
            (None, None)
        };

        let (d_seg, mut d_feat) = match &cache.route {
            Route::Pair => {
                let seg = match (&grads.seg_t1, &grads.seg_t2) {
                    (None, None) => None,
                    (a, b) => {
                        let like = a.as_ref().or(b.as_ref()).unwrap();
                        let z = Array4::<T>::zeros(like.dim());
                        Some(concat_batch(a.as_ref().unwrap_or(&z), b.as_ref().unwrap_or(&z)))
                    }
                };
                let feat = match (d_f1, d_f2) {
                    (Some(a), Some(b)) => concat_batch(&a, &b),
                    _ => zeros(),
                };
                (seg, feat)
            }
            Route::Pseudo { perm } => {
                let seg = match (&grads.seg_t1, &grads.seg_t2) {
                    (None, None) => None,
                    (a, b) => {
                        let like = a.as_ref().or(b.as_ref()).unwrap();
                        let mut acc = a.clone().unwrap_or_else(|| Array4::zeros(like.dim()));
                        if let Some(b) = b {
                            scatter_add_batch(&mut acc, b, perm);
                        }
                        Some(acc)
                    }
                };
                let feat = match (d_f1, d_f2) {
                    (Some(mut a), Some(b)) => {
                        scatter_add_batch(&mut a, &b, perm);
                        a
                    }
                    _ => zeros(),
                };
                (seg, feat)
            }
            Route::Single => {
                if grads.seg_t2.is_some() {
                    return Err(StarError::contract("second-date gradient for a single-date pass"));
                }
                (grads.seg_t1.clone(), zeros())
            }
        };
        if let Some(d_seg) = d_seg {
            d_feat += &self.backbone.backward_segment(&d_seg);
        }
        self.backbone.backward_features(&d_feat);
        Ok(())
    }
}

impl<T: Float> Parameters<T> for ChangeStar<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.backbone.visit(&scoped(prefix, "backbone"), f);
        self.mixin.visit(&scoped(prefix, "mixin"), f);
    }
}

/// Post-classification comparison: `(sigma(s1) > t) xor (sigma(s2) > t)`.
pub fn pcc_from_logits<T: Float>(seg_t1: &Array4<T>, seg_t2: &Array4<T>, threshold: f64) -> Result<Array3<u8>> {
    if seg_t1.dim() != seg_t2.dim() || seg_t1.dim().1 != 1 {
        return Err(StarError::contract(format!(
            "PCC needs matching single-channel logits, got {:?} and {:?}",
            seg_t1.dim(),
            seg_t2.dim()
        )));
    }
    let a = seg_t1.index_axis(Axis(1), 0);
    let b = seg_t2.index_axis(Axis(1), 0);
    let mut out = Array3::<u8>::zeros(a.raw_dim());
    ndarray::Zip::from(&mut out).and(&a).and(&b).for_each(|o, &p, &q| {
        let p = sigmoid(p.to_f64().unwrap_or(f64::NAN)) > threshold;
        let q = sigmoid(q.to_f64().unwrap_or(f64::NAN)) > threshold;
        *o = u8::from(p ^ q);
    });
    Ok(out)
}

/// Change map from a model's own semantic predictions on both dates.
pub fn pcc_predict<T: Float>(model: &mut ChangeStar<T>, x1: &Array4<T>, x2: &Array4<T>, threshold: f64) -> Result<Array3<u8>> {
    let s1 = model.forward_segmentation(x1, Mode::Infer)?;
    let s2 = model.forward_segmentation(x2, Mode::Infer)?;
    pcc_from_logits(&s1, &s2, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Architecture {
        Architecture {
            backbone: "fpn-lite".into(),
            backbone_config: serde_json::json!({"in_channels": 3, "base_width": 4, "feature_channels": 6}),
            mixin: ChangeMixinConfig { layers: 2, width: 8 },
        }
    }

    fn images(n: usize, seed: u64) -> Array4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn((n, 3, 16, 16), |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn pseudo_pair_matches_explicit_pair() {
        let mut model = ChangeStar::<f64>::new(tiny(), 3).unwrap();
        let x = images(3, 1);
        let perm = Derangement::from_indices(vec![2, 0, 1]).unwrap();
        let x2 = x.select(Axis(0), perm.as_slice());
        let pseudo = model.forward_pseudo(&x, &perm, Mode::Infer).unwrap();
        let pair = model.forward_pair(&x, &x2, Mode::Infer).unwrap();
        let diff = (&pseudo.change.forward - &pair.change.forward).mapv(f64::abs);
        assert!(diff.iter().all(|&d| d < 1e-9));
        assert!((&pseudo.seg_t2 - &pair.seg_t2).iter().all(|d| d.abs() < 1e-9));
    }

    #[test]
    fn backward_fills_gradients_and_consumes_the_cache() {
        let x = images(2, 7);
        let perm = Derangement::from_indices(vec![1, 0]).unwrap();
        let mut a = ChangeStar::<f64>::new(tiny(), 5).unwrap();
        let out = a.forward_pseudo(&x, &perm, Mode::Train).unwrap();
        let g = OutputGrads {
            seg_t1: Some(out.seg_t1.mapv(|_| 0.1)),
            seg_t2: Some(out.seg_t2.mapv(|_| -0.05)),
            change_forward: Some(out.change.forward.mapv(|_| 0.2)),
            change_backward: out.change.backward.as_ref().map(|b| b.mapv(|_| 0.3)),
        };
        a.backward(&g).unwrap();
        let mut total = 0.0;
        a.visit("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                total += p.grad.iter().map(|v| v.abs()).sum::<f64>();
            }
        });
        assert!(total.is_finite() && total > 0.0);
        assert!(a.backward(&g).is_err(), "cache is consumed");
    }

    #[test]
    fn output_shapes() {
        let mut model = ChangeStar::<f32>::new(Architecture::default(), 0).unwrap();
        let x = Array4::<f32>::from_elem((2, 3, 64, 48), 0.3);
        let out = model.forward_pair(&x, &x, Mode::Train).unwrap();
        assert_eq!(out.seg_t1.dim(), (2, 1, 64, 48));
        assert_eq!(out.change.forward.dim(), (2, 1, 64, 48));
        assert_eq!(out.change.backward.unwrap().dim(), (2, 1, 64, 48));
        let seg = model.forward_segmentation(&x.slice(s![..1, .., .., ..]).to_owned(), Mode::Infer).unwrap();
        assert_eq!(seg.dim(), (1, 1, 64, 48));
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let mut model = ChangeStar::<f32>::new(Architecture::default(), 0).unwrap();
        let x = Array4::<f32>::zeros((1, 4, 16, 16));
        assert!(model.forward_segmentation(&x, Mode::Infer).is_err());
    }

    #[test]
    fn pcc_is_xor_of_thresholded_probabilities() {
        let a = Array4::from_shape_vec((1, 1, 1, 4), vec![2.0f32, 2.0, -2.0, -2.0]).unwrap();
        let b = Array4::from_shape_vec((1, 1, 1, 4), vec![2.0f32, -2.0, 2.0, -2.0]).unwrap();
        let out = pcc_from_logits(&a, &b, 0.5).unwrap();
        assert_eq!(out.iter().copied().collect::<Vec<_>>(), vec![0, 1, 1, 0]);
    }
}
