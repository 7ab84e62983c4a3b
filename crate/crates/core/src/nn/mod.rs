//! A small convolutional network stack written from scratch.
//!
//! Layers work on batch-first `N x C x H x W` tensors, are generic over the
//! scalar type (`f32` for training, `f64` for gradient checks) and cache
//! what they need for the backward pass during a training forward pass.
//! Matrix products go through `matrixmultiply`.

mod checkpoint;
pub mod gradcheck;
mod layers;
mod model;
mod optim;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint, CheckpointError};
pub use layers::{softmax_cross_entropy, Conv2d, Dense, Layer, MaxPool2, Relu};
pub use model::{build_model, Model, ModelSpec};
pub use optim::{Adam, AdamConfig};
pub use train::{evaluate, train, Batch, LabeledInput, TrainConfig, TrainLog};

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("model takes {expected} input channels, data has {found}")]
    VariantMismatch { expected: usize, found: usize },
    #[error("evaluation set is empty")]
    EmptySet,
}

/// Floating-point types the layers run on.
pub trait Scalar: Float + Default + Debug + Send + Sync + Sum + AddAssign + SubAssign + MulAssign + 'static {
    /// `c = alpha * a * b + beta * c` on strided matrices.
    ///
    /// # Safety
    /// Strides and dimensions must describe memory inside the slices' allocations.
    #[allow(clippy::too_many_arguments)]
    unsafe fn raw_gemm(
        m: usize, k: usize, n: usize,
        alpha: Self, a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self, c: *mut Self, rsc: isize, csc: isize,
    );

    fn from_f64(v: f64) -> Self {
        <Self as num_traits::NumCast>::from(v).expect("representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite")
    }
}

impl Scalar for f32 {
    unsafe fn raw_gemm(
        m: usize, k: usize, n: usize,
        alpha: f32, a: *const f32, rsa: isize, csa: isize,
        b: *const f32, rsb: isize, csb: isize,
        beta: f32, c: *mut f32, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    unsafe fn raw_gemm(
        m: usize, k: usize, n: usize,
        alpha: f64, a: *const f64, rsa: isize, csa: isize,
        b: *const f64, rsb: isize, csb: isize,
        beta: f64, c: *mut f64, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix view used by [`gemm`].
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a, T> Mat<'a, T> {
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: false }
    }

    /// The transpose of a stored `rows x cols` matrix.
    pub fn t(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, transposed: true }
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = a * b + (accumulate ? c : 0)`, `c` row-major.
pub(crate) fn gemm<T: Scalar>(a: Mat<'_, T>, b: Mat<'_, T>, c: &mut [T], accumulate: bool) {
    let (m, k) = a.shape();
    let (k2, n) = b.shape();
    assert_eq!(k, k2, "inner dimensions differ");
    assert!(a.data.len() >= a.rows * a.cols && b.data.len() >= b.rows * b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        T::raw_gemm(m, k, n, T::one(), a.data.as_ptr(), rsa, csa, b.data.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1)
    }
}

/// Dense row-major tensor of up to four dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::ShapeMismatch { expected: vec![n], found: vec![data.len()] });
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Elements per batch entry.
    pub fn sample_len(&self) -> usize {
        self.shape[1..].iter().product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(Mat::new(&a, 2, 3), Mat::new(&b, 3, 2), &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // a^T a is 3x3
        let mut d = [0.0; 9];
        gemm(Mat::t(&a, 2, 3), Mat::new(&a, 2, 3), &mut d, false);
        assert_eq!(d, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        gemm(Mat::t(&a, 2, 3), Mat::new(&a, 2, 3), &mut d, true);
        assert_eq!(d[0], 34.0);
    }

    #[test]
    fn tensor_shape_check() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f32>::zeros(&[4, 2, 3, 3]);
        assert_eq!((t.batch(), t.sample_len(), t.len()), (4, 18, 72));
    }
}
