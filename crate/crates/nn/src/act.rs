use ndarray::Array4;

use crate::Float;

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    output: Option<Array4<T>>,
}

impl<T: Float> Relu<T> {
    pub fn new() -> Self {
        Self { output: None }
    }

    pub fn forward(&mut self, x: Array4<T>, train: bool) -> Array4<T> {
        let y = x.mapv_into(|v| if v > T::zero() { v } else { T::zero() });
        if train {
            self.output = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, mut dy: Array4<T>) -> Array4<T> {
        let y = self
            .output
            .take()
            .expect("Relu::backward called without a training forward pass");
        ndarray::Zip::from(&mut dy).and(&y).for_each(|d, &v| {
            if v <= T::zero() {
                *d = T::zero();
            }
        });
        dy
    }
}
