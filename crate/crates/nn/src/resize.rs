//! Bilinear resampling with half-pixel centers (`align_corners = false`).

use ndarray::Array4;

use crate::Float;

/// For every output index: the two source taps and the weight of the second.
fn taps<T: Float>(in_len: usize, out_len: usize) -> Vec<(usize, usize, T)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, T::of(src - i0 as f64))
        })
        .collect()
}

pub fn resize_bilinear<T: Float>(x: &Array4<T>, out_h: usize, out_w: usize) -> Array4<T> {
    let (n, c, h, w) = x.dim();
    if (h, w) == (out_h, out_w) {
        return x.to_owned();
    }
    let ty = taps::<T>(h, out_h);
    let tx = taps::<T>(w, out_w);
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let mut out = Array4::<T>::zeros((n, c, out_h, out_w));
    let ys = out.as_slice_mut().unwrap();
    let mut rows = vec![T::zero(); h * out_w];
    for p in 0..n * c {
        let src = &xs[p * h * w..(p + 1) * h * w];
        for r in 0..h {
            let line = &src[r * w..(r + 1) * w];
            for (o, &(a, b, l)) in tx.iter().enumerate() {
                rows[r * out_w + o] = line[a] * (T::one() - l) + line[b] * l;
            }
        }
        let dst = &mut ys[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (o, &(a, b, l)) in ty.iter().enumerate() {
            let (ra, rb) = (&rows[a * out_w..(a + 1) * out_w], &rows[b * out_w..(b + 1) * out_w]);
            for j in 0..out_w {
                dst[o * out_w + j] = ra[j] * (T::one() - l) + rb[j] * l;
            }
        }
    }
    out
}

/// Adjoint of [`resize_bilinear`]: maps an output gradient back to `in_h x in_w`.
pub fn resize_bilinear_backward<T: Float>(dy: &Array4<T>, in_h: usize, in_w: usize) -> Array4<T> {
    let (n, c, out_h, out_w) = dy.dim();
    if (in_h, in_w) == (out_h, out_w) {
        return dy.to_owned();
    }
    let ty = taps::<T>(in_h, out_h);
    let tx = taps::<T>(in_w, out_w);
    let dy = dy.as_standard_layout();
    let ds = dy.as_slice().unwrap();
    let mut dx = Array4::<T>::zeros((n, c, in_h, in_w));
    let dxs = dx.as_slice_mut().unwrap();
    let mut rows = vec![T::zero(); in_h * out_w];
    for p in 0..n * c {
        rows.fill(T::zero());
        let g = &ds[p * out_h * out_w..(p + 1) * out_h * out_w];
        for (o, &(a, b, l)) in ty.iter().enumerate() {
            for j in 0..out_w {
                let v = g[o * out_w + j];
                rows[a * out_w + j] += v * (T::one() - l);
                rows[b * out_w + j] += v * l;
            }
        }
        let dst = &mut dxs[p * in_h * in_w..(p + 1) * in_h * in_w];
        for r in 0..in_h {
            for (o, &(a, b, l)) in tx.iter().enumerate() {
                let v = rows[r * out_w + o];
                dst[r * in_w + a] += v * (T::one() - l);
                dst[r * in_w + b] += v * l;
            }
        }
    }
    dx
}
