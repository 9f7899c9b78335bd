use ndarray::{s, Array2, Array3, Array4};

use super::{as_batch, ChangePredictor};
use crate::error::{Result, StarError};

fn origins(len: usize, window: usize, stride: usize) -> Vec<usize> {
    if len <= window {
        return vec![0];
    }
    let last = len - window;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().expect("non-empty") != last {
        v.push(last);
    }
    v
}

/// Tiles both images with `window x window` crops every `stride` pixels,
/// averages overlapping probabilities and then applies the predictor's
/// decision rule. Images smaller than the window are predicted in one call.
pub fn sliding_window_predict(
    predictor: &mut dyn ChangePredictor,
    image_t1: &Array3<f32>,
    image_t2: &Array3<f32>,
    window: usize,
    stride: usize,
    threshold: f64,
) -> Result<Array2<u8>> {
    if image_t1.dim() != image_t2.dim() {
        return Err(StarError::contract(format!(
            "images differ in shape: {:?} vs {:?}",
            image_t1.dim(),
            image_t2.dim()
        )));
    }
    if stride == 0 || window < stride {
        return Err(StarError::contract(format!("need window >= stride > 0, got {window} and {stride}")));
    }
    let (_, h, w) = image_t1.dim();
    let (wh, ww) = (window.min(h), window.min(w));
    let rows = origins(h, wh, stride);
    let cols = origins(w, ww, stride);

    if rows.len() == 1 && cols.len() == 1 {
        let p = predictor.probabilities(&as_batch(image_t1), &as_batch(image_t2))?;
        return Ok(predictor.decide(p.index_axis(ndarray::Axis(0), 0), threshold));
    }

    let mut sum: Option<Array3<f32>> = None;
    let mut hits = Array2::<u32>::zeros((h, w));
    for &r in &rows {
        for &c in &cols {
            let crop = |img: &Array3<f32>| -> Array4<f32> { as_batch(&img.slice(s![.., r..r + wh, c..c + ww]).to_owned()) };
            let p = predictor.probabilities(&crop(image_t1), &crop(image_t2))?;
            let p = p.index_axis(ndarray::Axis(0), 0);
            let acc = sum.get_or_insert_with(|| Array3::zeros((p.dim().0, h, w)));
            let mut dst = acc.slice_mut(s![.., r..r + wh, c..c + ww]);
            dst += &p;
            let mut hit = hits.slice_mut(s![r..r + wh, c..c + ww]);
            hit += 1;
        }
    }
    let mut avg = sum.expect("at least one window");
    for mut plane in avg.outer_iter_mut() {
        plane.zip_mut_with(&hits, |v, &n| *v /= n as f32);
    }
    Ok(predictor.decide(avg.view(), threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayView3, Axis};

    /// Probability is a fixed smooth function of the pixel values, so the
    /// blockwise oracle can be evaluated independently.
    struct Pixelwise;

    impl ChangePredictor for Pixelwise {
        fn probabilities(&mut self, x1: &Array4<f32>, x2: &Array4<f32>) -> Result<Array4<f32>> {
            let d = (x1 - x2).sum_axis(Axis(1)).insert_axis(Axis(1));
            Ok(d.mapv(|v| 1.0 / (1.0 + (-4.0 * v).exp())))
        }
        fn decide(&self, p: ArrayView3<'_, f32>, t: f64) -> Array2<u8> {
            p.index_axis(Axis(0), 0).mapv(|v| u8::from(f64::from(v) > t))
        }
    }

    struct Constant(f32);

    impl ChangePredictor for Constant {
        fn probabilities(&mut self, x1: &Array4<f32>, _: &Array4<f32>) -> Result<Array4<f32>> {
            let (n, _, h, w) = x1.dim();
            Ok(Array4::from_elem((n, 1, h, w), self.0))
        }
        fn decide(&self, p: ArrayView3<'_, f32>, t: f64) -> Array2<u8> {
            p.index_axis(Axis(0), 0).mapv(|v| u8::from(f64::from(v) > t))
        }
    }

    fn image(seed: u32, h: usize, w: usize) -> Array3<f32> {
        Array3::from_shape_fn((3, h, w), |(c, i, j)| (((i * 7 + j * 13 + c * 5) as u32 ^ seed) % 17) as f32 / 17.0)
    }

    #[test]
    fn origins_cover_the_extent() {
        assert_eq!(origins(10, 4, 3), vec![0, 3, 6]);
        assert_eq!(origins(10, 4, 4), vec![0, 4, 6]);
        assert_eq!(origins(3, 4, 2), vec![0]);
    }

    #[test]
    fn constant_model_is_stride_independent() {
        let (a, b) = (image(1, 20, 20), image(2, 20, 20));
        let x = sliding_window_predict(&mut Constant(0.7), &a, &b, 8, 3, 0.5).unwrap();
        let y = sliding_window_predict(&mut Constant(0.7), &a, &b, 8, 8, 0.5).unwrap();
        assert_eq!(x, y);
        assert!(x.iter().all(|&v| v == 1));
    }

    #[test]
    fn window_smaller_than_stride_is_an_error() {
        let a = image(1, 8, 8);
        assert!(sliding_window_predict(&mut Constant(0.1), &a, &a, 4, 5, 0.5).is_err());
    }

    #[test]
    fn blockwise_oracle() {
        let (a, b) = (image(3, 16, 16), image(9, 16, 16));
        let got = sliding_window_predict(&mut Pixelwise, &a, &b, 8, 8, 0.5).unwrap();
        let mut oracle = Array2::<u8>::zeros((16, 16));
        for r in [0, 8] {
            for c in [0, 8] {
                let block = |x: &Array3<f32>| as_batch(&x.slice(s![.., r..r + 8, c..c + 8]).to_owned());
                let p = Pixelwise.probabilities(&block(&a), &block(&b)).unwrap();
                oracle
                    .slice_mut(s![r..r + 8, c..c + 8])
                    .assign(&Pixelwise.decide(p.index_axis(Axis(0), 0), 0.5));
            }
        }
        assert_eq!(got, oracle);
    }
}
