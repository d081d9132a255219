//! Floating-point scalar abstraction shared by every kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

use crate::tensor::DType;

/// Real scalar a [`Tensor`](crate::Tensor) can hold: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// On-disk dtype tag.
    const DTYPE: DType;
    /// Width in bytes of one little-endian element.
    const BYTES: usize;

    fn from_f64_lossy(v: f64) -> Self;
    fn into_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);
    /// `bytes.len()` must equal [`Self::BYTES`].
    fn read_le(bytes: &[u8]) -> Self;

    /// Bitwise equality, used by determinism checks.
    fn bits_eq(self, other: Self) -> bool;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::Real32;
    const BYTES: usize = 4;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4-byte chunk"))
    }
    fn bits_eq(self, other: Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::Real64;
    const BYTES: usize = 8;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8-byte chunk"))
    }
    fn bits_eq(self, other: Self) -> bool {
        self.to_bits() == other.to_bits()
    }
}
