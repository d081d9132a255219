//! Dense row-major tensors and the `.dt` exchange format.

mod format;

pub use format::{read_any, read_tensor, write_tensor, AnyTensor, MAGIC};

use crate::error::{contract, Result};
use crate::scalar::Scalar;

/// Element type tag stored in the `.dt` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    Real32,
    Real64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Real32 => 0,
            DType::Real64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::Real32),
            1 => Some(DType::Real64),
            _ => None,
        }
    }

    pub fn size_of(self) -> usize {
        match self {
            DType::Real32 => 4,
            DType::Real64 => 8,
        }
    }
}

/// Dense n-dimensional array, row-major, last axis fastest.
///
/// Sequence tensors are laid out `[batch, time, channels]` so a single frame's
/// channels are contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel = numel(&shape);
        if numel != data.len() {
            return Err(contract(format!(
                "shape {shape:?} holds {numel} elements but data has {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![S::zero(); numel(shape)],
        }
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    /// Builds a tensor by evaluating `f` on each flat index in row-major order.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> S) -> Self {
        Self {
            shape: shape.to_vec(),
            data: (0..numel(shape)).map(f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &d)| {
            debug_assert!(i < d, "index {i} out of bounds for dim {d}");
            acc * d + i
        })
    }

    pub fn get(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: S) {
        let at = self.offset(index);
        self.data[at] = value;
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| T::from_f64_lossy(v.into_f64()))
                .collect(),
        }
    }

    pub fn fill(&mut self, value: S) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `self += other` elementwise.
    pub fn add_assign(&mut self, other: &Tensor<S>) -> Result<()> {
        self.expect_shape(other.shape())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }

    pub fn abs_sum(&self) -> S {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor<S>) -> Result<S> {
        self.expect_shape(other.shape())?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    /// True when both tensors share a shape and every element is bit-identical.
    pub fn bitwise_eq(&self, other: &Tensor<S>) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| a.bits_eq(b))
    }

    pub fn expect_shape(&self, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(contract(format!(
                "expected shape {shape:?}, got {:?}",
                self.shape
            )));
        }
        Ok(())
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_major_offset_matches_index_arithmetic() {
        let (a, b) = (3, 5);
        let t = Tensor::<f64>::from_fn(&[a, b], |i| i as f64);
        for i in 0..a {
            for j in 0..b {
                assert_eq!(t.offset(&[i, j]), i * b + j);
                assert_eq!(t.get(&[i, j]), (i * b + j) as f64);
            }
        }
        let t3 = Tensor::<f32>::zeros(&[2, 3, 4]);
        assert_eq!(t3.offset(&[1, 2, 3]), (3 + 2) * 4 + 3);
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(Tensor::<f32>::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_ok());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::<f64>::from_fn(&[2, 6], |i| i as f64);
        let r = t.clone().reshape(&[3, 4]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[5]).is_err());
    }
}
