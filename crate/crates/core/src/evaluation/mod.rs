//! Pixel metrics, sliding-window inference and comparison reports.
//!
//! IoU and F1 are computed from confusion counts pooled over the whole
//! evaluation set, not averaged per image.

mod report;
mod window;

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use ndarray::{Array, Array2, Array3, Array4, ArrayView3, Axis, Dimension, Zip};
use serde::{Deserialize, Serialize};

use crate::datasets::BitemporalSample;
use crate::error::{Result, StarError};
use crate::model::{sigmoid, ChangeStar, Mode};

pub use report::{
    compare_report, render_error_map, render_learning_curve, CompareReport, CurvePoint, ErrorCategory, ErrorMap,
    MethodReport, Methods, PairReport, ReportOptions, REPORT_FILE,
};
pub use window::sliding_window_predict;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn from_masks<D: Dimension>(pred: &Array<u8, D>, truth: &Array<u8, D>) -> Result<Self> {
        let mut c = Self::default();
        c.accumulate(pred, truth)?;
        Ok(c)
    }

    pub fn accumulate<D: Dimension>(&mut self, pred: &Array<u8, D>, truth: &Array<u8, D>) -> Result<()> {
        if pred.shape() != truth.shape() {
            return Err(StarError::contract(format!(
                "prediction {:?} and truth {:?} differ in shape",
                pred.shape(),
                truth.shape()
            )));
        }
        let mut tally = [0u64; 4];
        let mut bad = None;
        Zip::from(pred).and(truth).for_each(|&p, &t| {
            if p > 1 || t > 1 {
                bad = Some(p.max(t));
            }
            tally[usize::from(p & 1) * 2 + usize::from(t & 1)] += 1;
        });
        if let Some(v) = bad {
            return Err(StarError::contract(format!("masks must be 0/1, found {v}")));
        }
        self.tn += tally[0];
        self.fn_ += tally[1];
        self.fp += tally[2];
        self.tp += tally[3];
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// `tp / (tp + fp + fn)`, 0 when undefined.
    pub fn iou(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }

    /// `2 tp / (2 tp + fp + fn)`, 0 when undefined.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn scores(&self) -> Scores {
        Scores {
            iou: self.iou(),
            f1: self.f1(),
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub iou: f64,
    pub f1: f64,
}

/// Anything that turns an image pair into per-pixel probabilities and a
/// binary change decision. Probabilities are averaged across overlapping
/// windows before `decide` is applied.
pub trait ChangePredictor {
    /// `N x K x H x W` probabilities for `N x C x H x W` inputs.
    fn probabilities(&mut self, x1: &Array4<f32>, x2: &Array4<f32>) -> Result<Array4<f32>>;
    /// Binary change map from one `K x H x W` probability stack.
    fn decide(&self, probs: ArrayView3<'_, f32>, threshold: f64) -> Array2<u8>;
}

/// Change map from the ChangeMixin head, `sigmoid(logit) > threshold`.
pub struct ChangeHead<'a>(pub &'a mut ChangeStar<f32>);

impl ChangePredictor for ChangeHead<'_> {
    fn probabilities(&mut self, x1: &Array4<f32>, x2: &Array4<f32>) -> Result<Array4<f32>> {
        let out = self.0.forward_pair(x1, x2, Mode::Infer)?;
        Ok(out.change.forward.mapv(|z| sigmoid(f64::from(z)) as f32))
    }

    fn decide(&self, probs: ArrayView3<'_, f32>, threshold: f64) -> Array2<u8> {
        probs.index_axis(Axis(0), 0).mapv(|p| u8::from(f64::from(p) > threshold))
    }
}

/// Post-classification comparison from a model's semantic head: both dates
/// are segmented independently and their binarized masks are xor-ed.
pub struct Pcc<'a>(pub &'a mut ChangeStar<f32>);

impl ChangePredictor for Pcc<'_> {
    fn probabilities(&mut self, x1: &Array4<f32>, x2: &Array4<f32>) -> Result<Array4<f32>> {
        let s1 = self.0.forward_segmentation(x1, Mode::Infer)?;
        let s2 = self.0.forward_segmentation(x2, Mode::Infer)?;
        let p = star_nn::ops::concat_channels(&s1, &s2);
        Ok(p.mapv(|z| sigmoid(f64::from(z)) as f32))
    }

    fn decide(&self, probs: ArrayView3<'_, f32>, threshold: f64) -> Array2<u8> {
        let a = probs.index_axis(Axis(0), 0);
        let b = probs.index_axis(Axis(0), 1);
        Zip::from(&a)
            .and(&b)
            .map_collect(|&p, &q| u8::from((f64::from(p) > threshold) ^ (f64::from(q) > threshold)))
    }
}

/// Inference settings. Without a window the whole image is one window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOptions {
    pub window: Option<usize>,
    pub stride: Option<usize>,
    pub threshold: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            window: None,
            stride: None,
            threshold: 0.5,
        }
    }
}

/// Predicts one pair's binary change map.
pub fn predict_pair(predictor: &mut dyn ChangePredictor, pair: &BitemporalSample, opts: &EvalOptions) -> Result<Array2<u8>> {
    let (h, w) = pair.size();
    let window = opts.window.unwrap_or(h.max(w));
    let stride = opts.stride.unwrap_or(window);
    sliding_window_predict(predictor, &pair.image_t1, &pair.image_t2, window, stride, opts.threshold)
}

/// Per-pair and pooled confusion counts over an evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub counts: ConfusionCounts,
    pub per_pair: Vec<(String, ConfusionCounts)>,
}

impl EvalResult {
    pub fn scores(&self) -> Scores {
        self.counts.scores()
    }
}

/// Evaluates a predictor; `on_prediction` sees every binary map.
pub fn evaluate(
    predictor: &mut dyn ChangePredictor,
    pairs: &[BitemporalSample],
    opts: &EvalOptions,
    mut on_prediction: impl FnMut(&BitemporalSample, &Array2<u8>) -> Result<()>,
) -> Result<EvalResult> {
    if pairs.is_empty() {
        return Err(StarError::EmptyDataset("evaluation set has no pairs".into()));
    }
    let mut per_pair = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let pred = predict_pair(predictor, pair, opts)?;
        per_pair.push((pair.id.clone(), ConfusionCounts::from_masks(&pred, &pair.change)?));
        on_prediction(pair, &pred)?;
    }
    Ok(EvalResult {
        counts: per_pair.iter().map(|(_, c)| *c).sum(),
        per_pair,
    })
}

/// Pooled counts without a callback.
pub fn evaluate_counts(predictor: &mut dyn ChangePredictor, pairs: &[BitemporalSample], opts: &EvalOptions) -> Result<ConfusionCounts> {
    Ok(evaluate(predictor, pairs, opts, |_, _| Ok(()))?.counts)
}

pub(crate) fn as_batch(image: &Array3<f32>) -> Array4<f32> {
    image.clone().insert_axis(Axis(0))
}
