use ndarray::Array4;
use rand::Rng;

use crate::param::{scoped, Parameters, Slot};
use crate::{BatchNorm2d, Conv2d, Float, Relu};

/// `conv (no bias) -> batch norm -> ReLU`.
#[derive(Clone, Debug)]
pub struct ConvBnRelu<T: Float> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
}

impl<T: Float> ConvBnRelu<T> {
    pub fn new<R: Rng + ?Sized>(cin: usize, cout: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            conv: Conv2d::new(cin, cout, kernel, stride, kernel / 2, false, rng),
            bn: BatchNorm2d::new(cout),
            relu: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: &Array4<T>, train: bool) -> Array4<T> {
        let y = self.conv.forward(x, train);
        let y = self.bn.forward(&y, train);
        self.relu.forward(y, train)
    }

    pub fn backward(&mut self, dy: Array4<T>) -> Array4<T> {
        let d = self.relu.backward(dy);
        let d = self.bn.backward(&d);
        self.conv.backward(&d)
    }
}

impl<T: Float> Parameters<T> for ConvBnRelu<T> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>)) {
        self.conv.visit(&scoped(prefix, "conv"), f);
        self.bn.visit(&scoped(prefix, "bn"), f);
    }
}
