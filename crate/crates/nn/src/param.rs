use ndarray::ArrayD;

use crate::Float;

/// A trainable tensor together with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
    /// Whether weight decay applies (conv weights only).
    pub decay: bool,
}

impl<T: Float> Param<T> {
    pub fn new(value: ArrayD<T>, decay: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Self { value, grad, decay }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Something a [`Parameters`] visitor can see: a trainable parameter or a
/// non-trainable state buffer (e.g. batch-norm running statistics).
pub enum Slot<'a, T> {
    Param(&'a mut Param<T>),
    Buffer(&'a mut ArrayD<T>),
}

impl<T> Slot<'_, T> {
    pub fn value(&self) -> &ArrayD<T> {
        match self {
            Slot::Param(p) => &p.value,
            Slot::Buffer(b) => b,
        }
    }

    pub fn value_mut(&mut self) -> &mut ArrayD<T> {
        match self {
            Slot::Param(p) => &mut p.value,
            Slot::Buffer(b) => b,
        }
    }
}

/// Visits every parameter and buffer in a fixed, deterministic order.
///
/// The visitation order defines the layout of checkpoints and optimizer state.
pub trait Parameters<T: Float> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, Slot<'_, T>));

    fn zero_grad(&mut self) {
        self.visit("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                p.zero_grad();
            }
        });
    }

    /// Number of trainable scalars.
    fn num_params(&mut self) -> usize {
        let mut total = 0;
        self.visit("", &mut |_, slot| {
            if let Slot::Param(p) = slot {
                total += p.len();
            }
        });
        total
    }
}

/// Joins a module prefix and a local name with a dot.
pub fn scoped(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
