//! Shape plumbing: channel/batch concatenation, splitting and gathering.

use ndarray::{concatenate, s, Array4, Axis};

use crate::Float;

pub fn concat_channels<T: Float>(a: &Array4<T>, b: &Array4<T>) -> Array4<T> {
    concatenate![Axis(1), a.view(), b.view()]
}

/// Splits off the first `first` channels.
pub fn split_channels<T: Float>(x: &Array4<T>, first: usize) -> (Array4<T>, Array4<T>) {
    (
        x.slice(s![.., ..first, .., ..]).to_owned(),
        x.slice(s![.., first.., .., ..]).to_owned(),
    )
}

pub fn concat_batch<T: Float>(a: &Array4<T>, b: &Array4<T>) -> Array4<T> {
    concatenate![Axis(0), a.view(), b.view()]
}

/// Splits off the first `first` samples.
pub fn split_batch<T: Float>(x: &Array4<T>, first: usize) -> (Array4<T>, Array4<T>) {
    (
        x.slice(s![..first, .., .., ..]).to_owned(),
        x.slice(s![first.., .., .., ..]).to_owned(),
    )
}

/// `out[i] = x[index[i]]`.
pub fn gather_batch<T: Float>(x: &Array4<T>, index: &[usize]) -> Array4<T> {
    x.select(Axis(0), index)
}

/// Adjoint of [`gather_batch`]: `acc[index[i]] += g[i]`.
pub fn scatter_add_batch<T: Float>(acc: &mut Array4<T>, g: &Array4<T>, index: &[usize]) {
    for (i, &j) in index.iter().enumerate() {
        let mut dst = acc.index_axis_mut(Axis(0), j);
        dst += &g.index_axis(Axis(0), i);
    }
}
