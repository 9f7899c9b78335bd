use ndarray::ArrayD;

use crate::param::{Parameters, Slot};
use crate::Float;

/// SGD with heavy-ball momentum and L2 weight decay:
/// `d = g + wd * w` (decayed params only), `buf = momentum * buf + d`,
/// `w -= lr * buf`.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    pub momentum: T,
    pub weight_decay: T,
    buffers: Vec<ArrayD<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(momentum: T, weight_decay: T) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut dyn Parameters<T>, lr: T) {
        let mut slot_index = 0;
        let (momentum, wd) = (self.momentum, self.weight_decay);
        let buffers = &mut self.buffers;
        model.visit("", &mut |_, slot| {
            let Slot::Param(p) = slot else { return };
            if buffers.len() == slot_index {
                buffers.push(ArrayD::zeros(p.value.raw_dim()));
            }
            let buf = &mut buffers[slot_index];
            let decay = if p.decay { wd } else { T::zero() };
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(buf)
                .for_each(|w, &g, b| {
                    let d = g + decay * *w;
                    *b = momentum * *b + d;
                    *w -= lr * *b;
                });
            slot_index += 1;
        });
    }

    /// Momentum buffers in parameter visitation order.
    pub fn buffers(&self) -> &[ArrayD<T>] {
        &self.buffers
    }

    pub fn set_buffers(&mut self, buffers: Vec<ArrayD<T>>) {
        self.buffers = buffers;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::{scoped, Param};
    use ndarray::IxDyn;

    struct One(Param<f64>);

    impl Parameters<f64> for One {
        fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, f64>)) {
            f(&scoped(prefix, "w"), Slot::Param(&mut self.0));
        }
    }

    #[test]
    fn momentum_and_decay_follow_the_update_rule() {
        let mut m = One(Param::new(ArrayD::from_elem(IxDyn(&[1]), 1.0), true));
        let mut opt = Sgd::new(0.9, 0.1);
        m.0.grad.fill(0.5);
        opt.step(&mut m, 0.1);
        // d = 0.5 + 0.1 = 0.6; buf = 0.6; w = 1 - 0.06
        assert!((m.0.value[[0]] - 0.94).abs() < 1e-15);
        opt.step(&mut m, 0.1);
        // d = 0.5 + 0.094; buf = 0.54 + 0.594 = 1.134; w = 0.94 - 0.1134
        assert!((m.0.value[[0]] - 0.8266).abs() < 1e-12);
    }
}
