use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A trainable tensor with its gradient buffer and learning-rate multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    /// Scales the optimizer learning rate for this parameter.
    pub lr_mult: S,
    /// Frozen parameters keep their value through optimizer steps.
    pub frozen: bool,
}

impl<S: Scalar> Parameter<S> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
            lr_mult: S::one(),
            frozen: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate(&mut self, delta: &Tensor<S>) {
        self.grad
            .add_assign(delta)
            .expect("gradient buffers always shape-match their parameter");
    }
}
