//! Object change detection learned from single-temporal supervision.
//!
//! Single-date tiles with building masks are paired inside each mini-batch by
//! a fixed-point-free permutation; the xor of the two masks is the change
//! label. A ChangeStar model (any segmentation backbone plus the ChangeMixin
//! head) is trained on these pseudo pairs and evaluated on real bitemporal
//! pairs against post-classification comparison.

pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod pairing;
pub mod training;

pub use error::{ErrorClass, Result, StarError};
