//! Minimal differentiable-array engine.
//!
//! The engine covers exactly the layers the steering network needs:
//! strided 2-D convolution, batch normalization, inverted dropout, fully
//! connected layers, ReLU/Tanh/Sigmoid, an LSTM cell, nearest-neighbor
//! 2x upsampling, MSE and softmax cross-entropy losses, and an Adam
//! optimizer with a reduce-on-plateau learning-rate schedule.
//!
//! Layers cache their forward inputs and expose `backward(upstream)`;
//! parameter gradients accumulate into each [`optim::Parameter`]. There is
//! no graph or tape: the model code calls backward passes in reverse order
//! itself, which keeps evaluation order fixed and runs bit-reproducible.
//!
//! All kernels are generic over [`Real`] so gradient checks run in f64
//! while training runs in f32.

pub mod act;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod lstm;
pub mod norm;
pub mod optim;

use std::fmt::{Debug, Display};

use num_traits::Float;

use crate::error::{Error, Result};

/// Element scalar for tensors: implemented for `f32` and `f64`.
pub trait Real: Float + Debug + Display + Default + 'static {
    /// Dtype code used by checkpoint and cache file headers.
    const DTYPE: u8;
    fn from_f64(x: f64) -> Self;
    fn to_f64_(self) -> f64;
}

impl Real for f32 {
    const DTYPE: u8 = 1;
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64_(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    const DTYPE: u8 = 2;
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64_(self) -> f64 {
        self
    }
}

/// Dense n-dimensional array in row-major order, with an optional
/// same-shape gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
            grad: None,
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Config(format!(
                "tensor shape {:?} wants {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// Fill with uniform values in [-bound, bound].
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut crate::rng::Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| T::from_f64(rng.uniform(-bound, bound)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Gradient buffer, allocating a zeroed one on first use.
    pub fn grad_mut(&mut self) -> &mut [T] {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
        self.grad.as_mut().unwrap()
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Reinterpret the buffer under a new shape with the same element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Config(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Hard error if any element is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        ensure_finite_slice(&self.data, context)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
        }
    }

    /// Convert element type (f32 <-> f64) through f64.
    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::from_f64(x.to_f64_())).collect(),
            grad: None,
        }
    }
}

/// Hard error if any element of `data` is NaN or infinite.
pub fn ensure_finite_slice<T: Real>(data: &[T], context: &str) -> Result<()> {
    for (i, v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{context}: element {i} is {v}"
            )));
        }
    }
    Ok(())
}

/// Batch size of a [N, ...] tensor.
pub fn batch_of<T: Real>(t: &Tensor<T>) -> usize {
    t.shape().first().copied().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_matches_len() {
        let t = Tensor::<f32>::zeros(&[2, 3, 4]);
        assert_eq!(t.len(), 24);
        assert_eq!(t.shape(), &[2, 3, 4]);
    }

    #[test]
    fn from_vec_rejects_mismatch() {
        let r = Tensor::<f32>::from_vec(&[2, 2], vec![1.0; 3]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn finite_check_catches_nan() {
        let mut t = Tensor::<f64>::zeros(&[3]);
        t.data_mut()[1] = f64::NAN;
        assert!(matches!(t.ensure_finite("test"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn grad_allocates_lazily_with_same_shape() {
        let mut t = Tensor::<f32>::zeros(&[4, 5]);
        assert!(t.grad().is_none());
        t.grad_mut()[3] = 1.0;
        assert_eq!(t.grad().unwrap().len(), 20);
    }

    #[test]
    fn cast_round_trips_f32_values() {
        let t = Tensor::<f32>::from_vec(&[3], vec![0.5, -1.25, 3.75]).unwrap();
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(t.data(), back.data());
    }
}
