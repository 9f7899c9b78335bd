//! Dense-prediction building blocks with explicit forward/backward passes.
//!
//! Every layer works on `NCHW` arrays and caches what its backward pass needs
//! when called with `train = true`. Layers are generic over [`Float`] so the
//! same network can be trained in `f32` and gradient-checked in `f64`.

pub mod act;
pub mod block;
pub mod conv;
pub mod norm;
pub mod ops;
pub mod optim;
pub mod param;
pub mod resize;

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

pub use act::Relu;
pub use block::ConvBnRelu;
pub use conv::Conv2d;
pub use norm::BatchNorm2d;
pub use optim::Sgd;
pub use param::{Param, Parameters, Slot};

/// Scalar type usable by every layer (`f32` or `f64`).
pub trait Float: NdFloat + FromPrimitive + Default + Sum {
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }
}

impl Float for f32 {}
impl Float for f64 {}

/// Pairwise sum that always splits at the midpoint.
///
/// Swapping the two halves of the input yields a bit-identical result, which
/// keeps batch statistics exactly invariant when the two halves of a doubled
/// batch exchange places.
pub fn tree_sum<T: Float>(values: &[T]) -> T {
    match values.len() {
        0 => T::zero(),
        1 => values[0],
        len => {
            let mid = len / 2;
            tree_sum(&values[..mid]) + tree_sum(&values[mid..])
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_sum_halves_commute() {
        let v: Vec<f32> = (0..10).map(|i| 0.1 * i as f32 + 1e-3).collect();
        let mut swapped = v[5..].to_vec();
        swapped.extend_from_slice(&v[..5]);
        assert_eq!(tree_sum(&v).to_bits(), tree_sum(&swapped).to_bits());
        assert_eq!(tree_sum::<f64>(&[]), 0.0);
    }
}
