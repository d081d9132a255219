//! `.dt` binary tensor format.
//!
//! Layout (all integers little-endian):
//! - magic: `b"DTNSR1"` (6 bytes)
//! - dtype: u8 (0 = real32, 1 = real64)
//! - rank: u8
//! - dims: rank × u64
//! - payload: row-major elements, little-endian

use std::io::{Read, Write};

use super::{numel, DType, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 6] = b"DTNSR1";

/// Writes `t` and returns the number of bytes emitted.
pub fn write_tensor<S: Scalar, W: Write>(t: &Tensor<S>, mut sink: W) -> Result<usize> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} exceeds 255", t.rank())));
    }
    let mut buf = Vec::with_capacity(8 + 8 * t.rank() + S::BYTES * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(S::DTYPE.code());
    buf.push(t.rank() as u8);
    for &d in t.shape() {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut buf);
    }
    sink.write_all(&buf)?;
    Ok(buf.len())
}

/// A tensor read from disk whose element type is only known at runtime.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Real32(Tensor<f32>),
    Real64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::Real32(_) => DType::Real32,
            AnyTensor::Real64(_) => DType::Real64,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::Real32(t) => t.shape(),
            AnyTensor::Real64(t) => t.shape(),
        }
    }

    /// Converts to `S`, widening or narrowing as needed.
    pub fn into_scalar<S: Scalar>(self) -> Tensor<S> {
        match self {
            AnyTensor::Real32(t) => t.cast(),
            AnyTensor::Real64(t) => t.cast(),
        }
    }
}

/// Reads one tensor; the stream must end exactly at the end of the payload.
pub fn read_any<R: Read>(mut source: R) -> Result<AnyTensor> {
    let mut head = [0u8; 8];
    source
        .read_exact(&mut head)
        .map_err(|_| Error::Format("stream shorter than the 8-byte header".into()))?;
    if &head[..6] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"DTNSR1\"",
            String::from_utf8_lossy(&head[..6])
        )));
    }
    let dtype = DType::from_code(head[6])
        .ok_or_else(|| Error::Format(format!("unknown dtype code {}", head[6])))?;
    let rank = head[7] as usize;

    let mut shape = Vec::with_capacity(rank);
    let mut dim = [0u8; 8];
    for axis in 0..rank {
        source
            .read_exact(&mut dim)
            .map_err(|_| Error::Format(format!("truncated header at dim {axis}")))?;
        let d = u64::from_le_bytes(dim);
        shape.push(
            usize::try_from(d).map_err(|_| Error::Format(format!("dim {d} does not fit usize")))?,
        );
    }
    let expected = shape
        .iter()
        .try_fold(dtype.size_of(), |acc: usize, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))?;

    let mut payload = Vec::with_capacity(expected);
    source.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "shape {shape:?} {dtype:?} needs {expected} payload bytes, found {}",
            payload.len()
        )));
    }

    Ok(match dtype {
        DType::Real32 => AnyTensor::Real32(decode(shape, &payload)),
        DType::Real64 => AnyTensor::Real64(decode(shape, &payload)),
    })
}

/// Reads one tensor and converts it to `S`.
pub fn read_tensor<S: Scalar, R: Read>(source: R) -> Result<Tensor<S>> {
    read_any(source).map(AnyTensor::into_scalar)
}

fn decode<S: Scalar>(shape: Vec<usize>, payload: &[u8]) -> Tensor<S> {
    debug_assert_eq!(payload.len(), numel(&shape) * S::BYTES);
    let data = payload.chunks_exact(S::BYTES).map(S::read_le).collect();
    Tensor::new(shape, data).expect("payload length checked")
}
