//! Elementwise activations and inverted dropout.

use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn tanh<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// ReLU layer caching its input sign pattern.
#[derive(Clone, Debug, Default)]
pub struct Relu<T: Real> {
    cached_input: Option<Tensor<T>>,
}

impl<T: Real> Relu<T> {
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        if train {
            self.cached_input = Some(x.clone());
        }
        relu(x)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cached_input.take().ok_or_else(|| {
            Error::Usage("relu backward called without a cached forward pass".into())
        })?;
        let mut out = upstream.clone();
        for (g, &x) in out.data_mut().iter_mut().zip(input.data()) {
            if x <= T::zero() {
                *g = T::zero();
            }
        }
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }
}

/// Tanh layer caching its output (dy/dx = 1 - y^2).
#[derive(Clone, Debug, Default)]
pub struct Tanh<T: Real> {
    cached_output: Option<Tensor<T>>,
}

impl<T: Real> Tanh<T> {
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        let y = tanh(x);
        if train {
            self.cached_output = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.cached_output.take().ok_or_else(|| {
            Error::Usage("tanh backward called without a cached forward pass".into())
        })?;
        let mut out = upstream.clone();
        for (g, &yv) in out.data_mut().iter_mut().zip(y.data()) {
            *g = *g * (T::one() - yv * yv);
        }
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cached_output = None;
    }
}

/// Inverted dropout: in training, each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); inference is identity.
#[derive(Clone, Debug)]
pub struct Dropout<T: Real> {
    pub rate: f64,
    cached_mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        Ok(Dropout {
            rate,
            cached_mask: None,
        })
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool, rng: &mut Rng) -> Tensor<T> {
        if !train || self.rate == 0.0 {
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let scale = T::from_f64(1.0 / keep);
        let mask: Vec<T> = (0..x.len())
            .map(|_| {
                if rng.next_f64() < self.rate {
                    T::zero()
                } else {
                    scale
                }
            })
            .collect();
        let mut out = x.clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        self.cached_mask = Some(mask);
        out
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        if self.rate == 0.0 {
            return Ok(upstream.clone());
        }
        let mask = self.cached_mask.take().ok_or_else(|| {
            Error::Usage("dropout backward called without a cached training forward".into())
        })?;
        let mut out = upstream.clone();
        for (g, &m) in out.data_mut().iter_mut().zip(&mask) {
            *g = *g * m;
        }
        Ok(out)
    }

    pub fn clear_cache(&mut self) {
        self.cached_mask = None;
    }
}
