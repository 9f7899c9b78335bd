//! 2-D convolution lowered to `im2col` + GEMM, one sample at a time.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array4, ArrayD, ArrayView2, ArrayViewMut2, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::param::{scoped, Param, Parameters, Slot};
use crate::Float;

#[derive(Clone, Debug)]
pub struct Conv2d<T: Float> {
    /// Shape `[out, in, k, k]`.
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    cache: Option<ConvCache<T>>,
}

#[derive(Clone, Debug)]
struct ConvCache<T> {
    input_dim: (usize, usize, usize, usize),
    /// One `(in*k*k) x (ho*wo)` column matrix per sample.
    cols: Vec<Vec<T>>,
}

impl<T: Float> Conv2d<T> {
    /// Kaiming-normal weights (fan-in, ReLU gain), zero bias.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        assert!(in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0);
        let fan_in = (in_channels * kernel * kernel) as f64;
        let std = (2.0 / fan_in).sqrt();
        let shape = IxDyn(&[out_channels, in_channels, kernel, kernel]);
        let weight = ArrayD::from_shape_simple_fn(shape, || {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * std)
        });
        let bias = bias.then(|| Param::new(ArrayD::zeros(IxDyn(&[out_channels])), false));
        Self {
            weight: Param::new(weight, true),
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let span = |len: usize| (len + 2 * self.padding - self.kernel) / self.stride + 1;
        (span(h), span(w))
    }

    fn geometry(&self, h: usize, w: usize) -> Geometry {
        let (ho, wo) = self.output_size(h, w);
        Geometry {
            channels: self.in_channels,
            h,
            w,
            kernel: self.kernel,
            stride: self.stride,
            padding: self.padding,
            ho,
            wo,
        }
    }

    pub fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.in_channels, "conv input channels");
        assert!(h + 2 * self.padding >= self.kernel && w + 2 * self.padding >= self.kernel);
        let geo = self.geometry(h, w);
        let (ho, wo) = (geo.ho, geo.wo);
        let rows = geo.rows();
        let pixels = ho * wo;
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let weight = self.weight_matrix();
        let bias = self.bias.as_ref().map(|b| b.value.as_slice().unwrap().to_vec());

        let mut out = Array4::<T>::zeros((n, self.out_channels, ho, wo));
        let sample_len = c * h * w;
        let cols: Vec<Vec<T>> = out
            .as_slice_mut()
            .unwrap()
            .par_chunks_mut(self.out_channels * pixels)
            .enumerate()
            .map(|(i, dst)| {
                let col = geo.im2col(&xs[i * sample_len..(i + 1) * sample_len]);
                let b = ArrayView2::from_shape((rows, pixels), &col).unwrap();
                let mut y = ArrayViewMut2::from_shape((self.out_channels, pixels), dst).unwrap();
                general_mat_mul(T::one(), &weight, &b, T::zero(), &mut y);
                if let Some(bias) = &bias {
                    for (mut row, &b) in y.rows_mut().into_iter().zip(bias.iter()) {
                        row.mapv_inplace(|v| v + b);
                    }
                }
                col
            })
            .collect();

        self.cache = train.then_some(ConvCache {
            input_dim: (n, c, h, w),
            cols,
        });
        out
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        let cache = self
            .cache
            .take()
            .expect("Conv2d::backward called without a training forward pass");
        let (n, c, h, w) = cache.input_dim;
        let geo = self.geometry(h, w);
        let pixels = geo.ho * geo.wo;
        let rows = geo.rows();
        assert_eq!(dy.dim(), (n, self.out_channels, geo.ho, geo.wo), "conv grad shape");
        let dy = dy.as_standard_layout();
        let dys = dy.as_slice().unwrap();
        let weight = self.weight_matrix();
        let out_len = self.out_channels * pixels;

        let mut dx = Array4::<T>::zeros((n, c, h, w));
        let partial: Vec<Vec<T>> = dx
            .as_slice_mut()
            .unwrap()
            .par_chunks_mut(c * h * w)
            .enumerate()
            .map(|(i, dxi)| {
                let g = ArrayView2::from_shape((self.out_channels, pixels), &dys[i * out_len..(i + 1) * out_len])
                    .unwrap();
                let col = ArrayView2::from_shape((rows, pixels), &cache.cols[i]).unwrap();
                let mut dw = vec![T::zero(); self.out_channels * rows];
                {
                    let mut dwv = ArrayViewMut2::from_shape((self.out_channels, rows), &mut dw[..]).unwrap();
                    general_mat_mul(T::one(), &g, &col.t(), T::zero(), &mut dwv);
                }
                let mut dcol = vec![T::zero(); rows * pixels];
                {
                    let mut dcv = ArrayViewMut2::from_shape((rows, pixels), &mut dcol[..]).unwrap();
                    general_mat_mul(T::one(), &weight.t(), &g, T::zero(), &mut dcv);
                }
                geo.col2im(&dcol, dxi);
                dw
            })
            .collect();

        let wgrad = self.weight.grad.as_slice_mut().unwrap();
        for dw in &partial {
            for (acc, &v) in wgrad.iter_mut().zip(dw) {
                *acc += v;
            }
        }
        if let Some(bias) = &mut self.bias {
            let bgrad = bias.grad.as_slice_mut().unwrap();
            for i in 0..n {
                for (o, acc) in bgrad.iter_mut().enumerate() {
                    let start = i * out_len + o * pixels;
                    *acc += dys[start..start + pixels].iter().copied().sum::<T>();
                }
            }
        }
        dx
    }

    fn weight_matrix(&self) -> ArrayView2<'_, T> {
        let rows = self.in_channels * self.kernel * self.kernel;
        ArrayView2::from_shape((self.out_channels, rows), self.weight.value.as_slice().unwrap()).unwrap()
    }
}

impl<T: Float> Parameters<T> for Conv2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&scoped(prefix, "weight"), Slot::Param(&mut self.weight));
        if let Some(b) = &mut self.bias {
            f(&scoped(prefix, "bias"), Slot::Param(b));
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Output columns `[lo, hi)` whose input column `ox*stride + kx - padding`
    /// falls inside the image.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let lo = if self.padding > k {
            (self.padding - k).div_ceil(self.stride)
        } else {
            0
        };
        let hi = if len + self.padding > k {
            ((len - 1 + self.padding - k) / self.stride + 1).min(out_len)
        } else {
            0
        };
        (lo.min(hi), hi)
    }

    fn im2col<T: Float>(&self, x: &[T]) -> Vec<T> {
        let pixels = self.ho * self.wo;
        let mut cols = vec![T::zero(); self.rows() * pixels];
        let plane_len = self.h * self.w;
        for c in 0..self.channels {
            let plane = &x[c * plane_len..(c + 1) * plane_len];
            for ky in 0..self.kernel {
                let (oy_lo, oy_hi) = self.valid_range(ky, self.h, self.ho);
                for kx in 0..self.kernel {
                    let (ox_lo, ox_hi) = self.valid_range(kx, self.w, self.wo);
                    let row = ((c * self.kernel + ky) * self.kernel + kx) * pixels;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * self.stride + ky - self.padding;
                        let src = &plane[iy * self.w..(iy + 1) * self.w];
                        let dst = &mut cols[row + oy * self.wo..row + (oy + 1) * self.wo];
                        if self.stride == 1 {
                            let ix0 = ox_lo + kx - self.padding;
                            dst[ox_lo..ox_hi].copy_from_slice(&src[ix0..ix0 + (ox_hi - ox_lo)]);
                        } else {
                            for ox in ox_lo..ox_hi {
                                dst[ox] = src[ox * self.stride + kx - self.padding];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Float>(&self, cols: &[T], dx: &mut [T]) {
        let pixels = self.ho * self.wo;
        let plane_len = self.h * self.w;
        for c in 0..self.channels {
            let plane = &mut dx[c * plane_len..(c + 1) * plane_len];
            for ky in 0..self.kernel {
                let (oy_lo, oy_hi) = self.valid_range(ky, self.h, self.ho);
                for kx in 0..self.kernel {
                    let (ox_lo, ox_hi) = self.valid_range(kx, self.w, self.wo);
                    let row = ((c * self.kernel + ky) * self.kernel + kx) * pixels;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * self.stride + ky - self.padding;
                        let src = &cols[row + oy * self.wo..row + (oy + 1) * self.wo];
                        let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                        for ox in ox_lo..ox_hi {
                            dst[ox * self.stride + kx - self.padding] += src[ox];
                        }
                    }
                }
            }
        }
    }
}
