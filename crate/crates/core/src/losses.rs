//! Binary cross-entropy semantic loss, the temporal-symmetry change loss and
//! their unweighted sum. Every loss is the mean over all pixels of the batch.

use ndarray::{Array3, Array4, Axis, Zip};
use serde::{Deserialize, Serialize};
use star_nn::Float;

use crate::error::{Result, StarError};
use crate::model::{ChangeStarOutput, OutputGrads};

/// Per-pixel `-[y ln p + (1-y) ln(1-p)]` with `p = sigmoid(z)`, written as
/// `max(z, 0) - z y + ln(1 + e^{-|z|})`.
pub fn bce_pixel(z: f64, y: bool) -> f64 {
    let y = if y { 1.0 } else { 0.0 };
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn check<T>(logits: &Array4<T>, targets: &Array3<u8>) -> Result<()> {
    let (n, c, h, w) = logits.dim();
    if c != 1 || (n, h, w) != targets.dim() {
        return Err(StarError::contract(format!(
            "logits {:?} do not match targets {:?}",
            logits.dim(),
            targets.dim()
        )));
    }
    if let Some(&v) = targets.iter().find(|&&v| v > 1) {
        return Err(StarError::contract(format!("targets must be 0/1, found {v}")));
    }
    Ok(())
}

/// Mean binary cross-entropy of `N x 1 x H x W` logits against `N x H x W`
/// binary targets.
pub fn bce<T: Float>(logits: &Array4<T>, targets: &Array3<u8>) -> Result<f64> {
    check(logits, targets)?;
    let z = logits.index_axis(Axis(1), 0);
    let total: f64 = z
        .iter()
        .zip(targets.iter())
        .map(|(&z, &y)| bce_pixel(z.to_f64().unwrap_or(f64::NAN), y == 1))
        .sum();
    Ok(total / targets.len() as f64)
}

/// [`bce`] and its gradient `(sigmoid(z) - y) * scale / count`.
pub fn bce_with_grad<T: Float>(logits: &Array4<T>, targets: &Array3<u8>, scale: f64) -> Result<(f64, Array4<T>)> {
    let loss = bce(logits, targets)?;
    let k = scale / targets.len() as f64;
    let mut grad = Array4::<T>::zeros(logits.dim());
    Zip::from(grad.index_axis_mut(Axis(1), 0))
        .and(logits.index_axis(Axis(1), 0))
        .and(targets)
        .for_each(|g, &z, &y| {
            let p = crate::model::sigmoid(z.to_f64().unwrap_or(f64::NAN));
            *g = T::of((p - f64::from(y)) * k);
        });
    Ok((loss, grad))
}

/// Which terms of the multi-task objective are active. The four combinations
/// are the component-ablation rows (b) through (e).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossFlags {
    pub use_semantic: bool,
    pub use_symmetry: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        Self {
            use_semantic: true,
            use_symmetry: true,
        }
    }
}

impl LossFlags {
    pub const ALL: [LossFlags; 4] = [
        LossFlags::new(false, false),
        LossFlags::new(true, false),
        LossFlags::new(false, true),
        LossFlags::new(true, true),
    ];

    pub const fn new(use_semantic: bool, use_symmetry: bool) -> Self {
        Self {
            use_semantic,
            use_symmetry,
        }
    }

    /// Ablation row label: b = bare, c = +semantic, d = +symmetry, e = both.
    pub fn row(self) -> char {
        match (self.use_semantic, self.use_symmetry) {
            (false, false) => 'b',
            (true, false) => 'c',
            (false, true) => 'd',
            (true, true) => 'e',
        }
    }

    pub fn from_row(row: char) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.row() == row)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub change: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(seg: f64, change: f64) -> Self {
        Self {
            seg,
            change,
            total: seg + change,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.seg.is_finite() && self.change.is_finite() && self.total.is_finite()
    }
}

/// Mean of the two dates' semantic BCE terms.
pub fn seg_loss<T: Float>(out: &ChangeStarOutput<T>, y1: &Array3<u8>, y2: &Array3<u8>) -> Result<f64> {
    Ok(0.5 * (bce(&out.seg_t1, y1)? + bce(&out.seg_t2, y2)?))
}

/// `(bce(fwd, y) + bce(bwd, y)) / 2`; needs the training-mode swapped output.
pub fn symmetry_change_loss<T: Float>(out: &ChangeStarOutput<T>, y_change: &Array3<u8>) -> Result<f64> {
    let bwd = out
        .change
        .backward
        .as_ref()
        .ok_or_else(|| StarError::contract("symmetry loss needs the swapped-order change logits"))?;
    Ok(0.5 * (bce(&out.change.forward, y_change)? + bce(bwd, y_change)?))
}

/// Labels for one training step. Semantic masks may be absent (bitemporal
/// corpora without building labels); then the semantic term must be off.
#[derive(Clone, Copy, Debug)]
pub struct LossTargets<'a> {
    pub semantic: Option<(&'a Array3<u8>, &'a Array3<u8>)>,
    pub change: &'a Array3<u8>,
}

/// Evaluates the objective and the gradient with respect to every output.
pub fn total_loss<T: Float>(
    out: &ChangeStarOutput<T>,
    targets: LossTargets<'_>,
    flags: LossFlags,
) -> Result<(LossBreakdown, OutputGrads<T>)> {
    let mut grads = OutputGrads {
        seg_t1: None,
        seg_t2: None,
        change_forward: None,
        change_backward: None,
    };
    let seg = if flags.use_semantic {
        let (y1, y2) = targets
            .semantic
            .ok_or_else(|| StarError::Config("semantic supervision is on but no semantic masks were given".into()))?;
        let (a, ga) = bce_with_grad(&out.seg_t1, y1, 0.5)?;
        let (b, gb) = bce_with_grad(&out.seg_t2, y2, 0.5)?;
        grads.seg_t1 = Some(ga);
        grads.seg_t2 = Some(gb);
        0.5 * (a + b)
    } else {
        0.0
    };
    let change = if flags.use_symmetry {
        let bwd = out
            .change
            .backward
            .as_ref()
            .ok_or_else(|| StarError::contract("symmetry loss needs the swapped-order change logits"))?;
        let (a, ga) = bce_with_grad(&out.change.forward, targets.change, 0.5)?;
        let (b, gb) = bce_with_grad(bwd, targets.change, 0.5)?;
        grads.change_forward = Some(ga);
        grads.change_backward = Some(gb);
        0.5 * (a + b)
    } else {
        let (a, ga) = bce_with_grad(&out.change.forward, targets.change, 1.0)?;
        grads.change_forward = Some(ga);
        a
    };
    Ok((LossBreakdown::new(seg, change), grads))
}
