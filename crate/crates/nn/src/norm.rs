use ndarray::{Array4, ArrayD, IxDyn};

use crate::param::{scoped, Param, Parameters, Slot};
use crate::{tree_sum, Float};

/// Per-channel batch normalization over `(N, H, W)`.
///
/// Batch statistics are reduced per sample first and then across samples with
/// [`tree_sum`], so a batch whose two halves are swapped normalizes to
/// bit-identical values.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T: Float> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: ArrayD<T>,
    pub running_var: ArrayD<T>,
    momentum: T,
    eps: T,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T> {
    xhat: Array4<T>,
    inv_std: Vec<T>,
}

impl<T: Float> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        let dim = IxDyn(&[channels]);
        Self {
            gamma: Param::new(ArrayD::ones(dim.clone()), false),
            beta: Param::new(ArrayD::zeros(dim.clone()), false),
            running_mean: ArrayD::zeros(dim.clone()),
            running_var: ArrayD::ones(dim),
            momentum: T::of(0.1),
            eps: T::of(1e-5),
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels(), "batch-norm channels");
        let x = x.as_standard_layout();
        let xs = x.as_slice().unwrap();
        let plane = h * w;
        let gamma = self.gamma.value.as_slice().unwrap();
        let beta = self.beta.value.as_slice().unwrap();
        let mut out = Array4::<T>::zeros((n, c, h, w));

        if !train {
            let ys = out.as_slice_mut().unwrap();
            for ch in 0..c {
                let inv = T::one() / (self.running_var[[ch]] + self.eps).sqrt();
                let scale = gamma[ch] * inv;
                let shift = beta[ch] - self.running_mean[[ch]] * scale;
                for i in 0..n {
                    let off = (i * c + ch) * plane;
                    for (y, &v) in ys[off..off + plane].iter_mut().zip(&xs[off..off + plane]) {
                        *y = v * scale + shift;
                    }
                }
            }
            return out;
        }

        let count = n * plane;
        let count_t = T::of(count as f64);
        let mut xhat = Array4::<T>::zeros((n, c, h, w));
        let mut inv_stds = Vec::with_capacity(c);
        {
            let ys = out.as_slice_mut().unwrap();
            let xh = xhat.as_slice_mut().unwrap();
            let mut per_sample = vec![T::zero(); n];
            for ch in 0..c {
                for (i, s) in per_sample.iter_mut().enumerate() {
                    let off = (i * c + ch) * plane;
                    *s = xs[off..off + plane].iter().copied().sum();
                }
                let mean = tree_sum(&per_sample) / count_t;
                for (i, s) in per_sample.iter_mut().enumerate() {
                    let off = (i * c + ch) * plane;
                    *s = xs[off..off + plane].iter().map(|&v| (v - mean) * (v - mean)).sum();
                }
                let var = tree_sum(&per_sample) / count_t;
                let inv = T::one() / (var + self.eps).sqrt();
                for i in 0..n {
                    let off = (i * c + ch) * plane;
                    for j in off..off + plane {
                        let nv = (xs[j] - mean) * inv;
                        xh[j] = nv;
                        ys[j] = nv * gamma[ch] + beta[ch];
                    }
                }
                let m = self.momentum;
                let unbiased = if count > 1 {
                    var * count_t / T::of((count - 1) as f64)
                } else {
                    var
                };
                self.running_mean[[ch]] = (T::one() - m) * self.running_mean[[ch]] + m * mean;
                self.running_var[[ch]] = (T::one() - m) * self.running_var[[ch]] + m * unbiased;
                inv_stds.push(inv);
            }
        }
        self.cache = Some(BnCache { xhat, inv_std: inv_stds });
        out
    }

    pub fn backward(&mut self, dy: &Array4<T>) -> Array4<T> {
        let cache = self
            .cache
            .take()
            .expect("BatchNorm2d::backward called without a training forward pass");
        let (n, c, h, w) = cache.xhat.dim();
        assert_eq!(dy.dim(), (n, c, h, w), "batch-norm grad shape");
        let dy = dy.as_standard_layout();
        let ds = dy.as_slice().unwrap();
        let xh = cache.xhat.as_slice().unwrap();
        let plane = h * w;
        let count_t = T::of((n * plane) as f64);
        let gamma = self.gamma.value.as_slice().unwrap().to_vec();
        let mut dx = Array4::<T>::zeros((n, c, h, w));
        let dxs = dx.as_slice_mut().unwrap();
        let dgamma = self.gamma.grad.as_slice_mut().unwrap();
        let dbeta = self.beta.grad.as_slice_mut().unwrap();
        for ch in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    sum_dy += ds[j];
                    sum_dy_xhat += ds[j] * xh[j];
                }
            }
            dbeta[ch] += sum_dy;
            dgamma[ch] += sum_dy_xhat;
            let k = gamma[ch] * cache.inv_std[ch] / count_t;
            for i in 0..n {
                let off = (i * c + ch) * plane;
                for j in off..off + plane {
                    dxs[j] = k * (count_t * ds[j] - sum_dy - xh[j] * sum_dy_xhat);
                }
            }
        }
        dx
    }
}

impl<T: Float> Parameters<T> for BatchNorm2d<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        f(&scoped(prefix, "gamma"), Slot::Param(&mut self.gamma));
        f(&scoped(prefix, "beta"), Slot::Param(&mut self.beta));
        f(&scoped(prefix, "running_mean"), Slot::Buffer(&mut self.running_mean));
        f(&scoped(prefix, "running_var"), Slot::Buffer(&mut self.running_var));
    }
}
