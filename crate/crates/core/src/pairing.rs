//! Pseudo-bitemporal pairs built inside a single-temporal mini-batch.
//!
//! A batch `x` with semantic masks `y` is paired with a reordering of itself
//! under a fixed-point-free permutation, and the change label of each pair is
//! the pixelwise exclusive-or of the two semantic masks: pixels covered by an
//! object in exactly one of the two images are positives, everything else
//! (including overlapping objects) is negative.

use ndarray::{Array, Array3, Array4, Axis, Dimension, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, StarError};

/// Draws after which [`Derangement::sample`] stops rejecting and returns the
/// rotation-by-one permutation.
pub const MAX_REJECTIONS: usize = 64;

/// A permutation of `0..n` without fixed points.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Derangement(Vec<usize>);

impl Derangement {
    /// Uniform permutations with rejection of any that fix a point.
    pub fn sample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(StarError::InvalidBatch(format!(
                "pseudo pairs need a batch of at least 2 samples, got {n}"
            )));
        }
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..MAX_REJECTIONS {
            perm.shuffle(rng);
            if perm.iter().enumerate().all(|(i, &p)| i != p) {
                return Ok(Self(perm));
            }
        }
        Ok(Self::rotation(n))
    }

    /// `i -> (i + 1) mod n`.
    pub fn rotation(n: usize) -> Self {
        assert!(n >= 2, "no derangement of fewer than 2 elements");
        Self((0..n).map(|i| (i + 1) % n).collect())
    }

    pub fn from_indices(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        if n < 2 {
            return Err(StarError::InvalidBatch(format!("derangement of length {n}")));
        }
        let mut seen = vec![false; n];
        for (i, &p) in indices.iter().enumerate() {
            if p >= n || seen[p] {
                return Err(StarError::contract(format!("{indices:?} is not a permutation")));
            }
            if p == i {
                return Err(StarError::contract(format!("{indices:?} fixes index {i}")));
            }
            seen[p] = true;
        }
        Ok(Self(indices))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    /// Object present in exactly one image (the proper change label).
    #[default]
    Xor,
    /// Object present in either image; only meaningful as an ablation.
    Or,
}

/// Combines two binary masks pixelwise.
pub fn assign_change_labels<D: Dimension>(
    a: &Array<u8, D>,
    b: &Array<u8, D>,
    mode: LabelMode,
) -> Result<Array<u8, D>> {
    if a.shape() != b.shape() {
        return Err(StarError::contract(format!(
            "label shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if let Some(&v) = a.iter().chain(b.iter()).find(|&&v| v > 1) {
        return Err(StarError::contract(format!("label value {v} is not binary")));
    }
    Ok(match mode {
        LabelMode::Xor => Zip::from(a).and(b).map_collect(|&p, &q| p ^ q),
        LabelMode::Or => Zip::from(a).and(b).map_collect(|&p, &q| p | q),
    })
}

/// One STAR training step's input.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoPairBatch {
    pub x1: Array4<f32>,
    pub x2: Array4<f32>,
    pub y1: Array3<u8>,
    pub y2: Array3<u8>,
    pub y_change: Array3<u8>,
    pub permutation: Derangement,
}

/// Pairs every sample with another one from the same batch (xor labels).
pub fn make_pseudo_pair_batch<R: Rng + ?Sized>(x: Array4<f32>, y: Array3<u8>, rng: &mut R) -> Result<PseudoPairBatch> {
    make_pseudo_pair_batch_with(x, y, LabelMode::Xor, rng)
}

pub fn make_pseudo_pair_batch_with<R: Rng + ?Sized>(
    x: Array4<f32>,
    y: Array3<u8>,
    mode: LabelMode,
    rng: &mut R,
) -> Result<PseudoPairBatch> {
    let (n, _, h, w) = x.dim();
    if y.dim() != (n, h, w) {
        return Err(StarError::contract(format!(
            "images {:?} and masks {:?} are not aligned",
            x.dim(),
            y.dim()
        )));
    }
    let permutation = Derangement::sample(n, rng)?;
    pair_with_permutation(x, y, permutation, mode)
}

/// Builds the pair batch for a given permutation.
pub fn pair_with_permutation(
    x: Array4<f32>,
    y: Array3<u8>,
    permutation: Derangement,
    mode: LabelMode,
) -> Result<PseudoPairBatch> {
    if permutation.len() != x.len_of(Axis(0)) || y.len_of(Axis(0)) != permutation.len() {
        return Err(StarError::contract("permutation length differs from batch size"));
    }
    let x2 = x.select(Axis(0), permutation.as_slice());
    let y2 = y.select(Axis(0), permutation.as_slice());
    let y_change = assign_change_labels(&y, &y2, mode)?;
    Ok(PseudoPairBatch {
        x1: x,
        x2,
        y1: y,
        y2,
        y_change,
        permutation,
    })
}
