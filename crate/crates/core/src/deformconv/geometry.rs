use crate::error::{contract, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Kernel size, stride, dilation, and symmetric zero padding of a 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelGeometry {
    pub kernel_size: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl KernelGeometry {
    pub fn new(kernel_size: usize, stride: usize, dilation: usize, padding: usize) -> Result<Self> {
        if kernel_size == 0 || stride == 0 || dilation == 0 {
            return Err(contract(format!(
                "kernel_size, stride and dilation must be >= 1 (got {kernel_size}, {stride}, {dilation})"
            )));
        }
        Ok(Self {
            kernel_size,
            stride,
            dilation,
            padding,
        })
    }

    /// Stride-1 geometry whose output length equals the input length.
    pub fn same(kernel_size: usize, dilation: usize) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(contract(format!(
                "same-length padding needs an odd kernel size, got {kernel_size}"
            )));
        }
        Self::new(kernel_size, 1, dilation, dilation * (kernel_size - 1) / 2)
    }

    /// Span in frames covered by one kernel placement.
    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.kernel_size - 1) + 1
    }

    /// `floor((T + 2·pad − dilation·(K−1) − 1) / stride) + 1`, or 0 when the kernel does not fit.
    pub fn output_len(&self, input_len: usize) -> usize {
        let padded = input_len + 2 * self.padding;
        if padded < self.receptive_field() {
            0
        } else {
            (padded - self.receptive_field()) / self.stride + 1
        }
    }

    /// Input frame read by tap `k` of output step `t`; may fall in the padding region.
    #[inline]
    pub fn position(&self, t: usize, k: usize) -> isize {
        (t * self.stride + k * self.dilation) as isize - self.padding as isize
    }

    /// Rigid sampling grid `p0` as a `[T_out, K]` tensor.
    pub fn base_positions<S: Scalar>(&self, input_len: usize) -> Tensor<S> {
        let k = self.kernel_size;
        let t_out = self.output_len(input_len);
        Tensor::from_fn(&[t_out, k], |i| {
            S::from_f64_lossy(self.position(i / k, i % k) as f64)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strided_grid_row() {
        let g = KernelGeometry::new(3, 7, 1, 0).unwrap();
        let p0 = g.base_positions::<f64>(16);
        assert_eq!(p0.dim(0), 2);
        assert_eq!(&p0.data()[3..6], &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn padded_grid_starts_negative() {
        let g = KernelGeometry::new(3, 1, 1, 1).unwrap();
        let p0 = g.base_positions::<f32>(4);
        assert_eq!(p0.shape(), &[4, 3]);
        assert_eq!(&p0.data()[..3], &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn same_padding_k15_preserves_length_and_centers() {
        let g = KernelGeometry::same(15, 1).unwrap();
        assert_eq!(g.padding, 7);
        let p0 = g.base_positions::<f64>(100);
        assert_eq!(p0.shape(), &[100, 15]);
        for t in 0..100 {
            assert_eq!(p0.get(&[t, 7]), t as f64);
        }
        assert!(KernelGeometry::same(4, 1).is_err());
    }

    #[test]
    fn kernel_larger_than_input_gives_empty_grid() {
        let g = KernelGeometry::new(5, 1, 2, 0).unwrap();
        assert_eq!(g.output_len(8), 0);
        let p0 = g.base_positions::<f64>(8);
        assert_eq!(p0.shape(), &[0, 5]);
        assert!(p0.is_empty());
    }

    #[test]
    fn rejects_zero_stride() {
        assert!(KernelGeometry::new(3, 0, 1, 0).is_err());
    }
}
