//! Fully connected layer: y = x W^T + b.

use super::optim::Parameter;
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Linear layer with weight [OUT, IN] and bias [OUT].
#[derive(Clone, Debug)]
pub struct Linear<T: Real> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    cached_input: Option<Tensor<T>>,
}

impl<T: Real> Linear<T> {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut Rng) -> Self {
        let bound = (6.0 / in_features as f64).sqrt();
        Linear {
            weight: Parameter::new(
                &format!("{name}.weight"),
                Tensor::uniform(&[out_features, in_features], bound, rng),
            ),
            bias: Parameter::new(&format!("{name}.bias"), Tensor::zeros(&[out_features])),
            cached_input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    /// Forward on a [N, IN] batch, producing [N, OUT].
    pub fn forward(&mut self, input: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let s = input.shape();
        if s.len() != 2 || s[1] != self.in_features() {
            return Err(Error::Config(format!(
                "linear expects [N, {}], got {:?}",
                self.in_features(),
                s
            )));
        }
        let (n, d_in, d_out) = (s[0], self.in_features(), self.out_features());
        let mut out = Tensor::zeros(&[n, d_out]);
        let wdata = self.weight.value.data();
        let bdata = self.bias.value.data();
        for b in 0..n {
            let x = &input.data()[b * d_in..(b + 1) * d_in];
            let y = &mut out.data_mut()[b * d_out..(b + 1) * d_out];
            for (o, yo) in y.iter_mut().enumerate() {
                let wrow = &wdata[o * d_in..(o + 1) * d_in];
                let mut acc = bdata[o];
                for (&xv, &wv) in x.iter().zip(wrow) {
                    acc = acc + xv * wv;
                }
                *yo = acc;
            }
        }
        if train {
            self.cached_input = Some(input.clone());
        }
        Ok(out)
    }

    /// Backward: accumulates dW = g^T x and db = sum g, returns dx = g W.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cached_input.take().ok_or_else(|| {
            Error::Usage("linear backward called without a cached forward pass".into())
        })?;
        let (n, d_in, d_out) = (input.shape()[0], self.in_features(), self.out_features());
        if upstream.shape() != [n, d_out] {
            return Err(Error::Usage(format!(
                "linear upstream shape {:?} does not match [{n}, {d_out}]",
                upstream.shape()
            )));
        }
        let mut dinput = Tensor::zeros(&[n, d_in]);
        {
            let dw = self.weight.value.grad_mut();
            for b in 0..n {
                let g = &upstream.data()[b * d_out..(b + 1) * d_out];
                let x = &input.data()[b * d_in..(b + 1) * d_in];
                for (o, &gv) in g.iter().enumerate() {
                    if gv == T::zero() {
                        continue;
                    }
                    let dwrow = &mut dw[o * d_in..(o + 1) * d_in];
                    for (dwv, &xv) in dwrow.iter_mut().zip(x) {
                        *dwv = *dwv + gv * xv;
                    }
                }
            }
        }
        {
            let db = self.bias.value.grad_mut();
            for b in 0..n {
                let g = &upstream.data()[b * d_out..(b + 1) * d_out];
                for (o, &gv) in g.iter().enumerate() {
                    db[o] = db[o] + gv;
                }
            }
        }
        let wdata = self.weight.value.data();
        for b in 0..n {
            let g = &upstream.data()[b * d_out..(b + 1) * d_out];
            let dx = &mut dinput.data_mut()[b * d_in..(b + 1) * d_in];
            for (o, &gv) in g.iter().enumerate() {
                if gv == T::zero() {
                    continue;
                }
                let wrow = &wdata[o * d_in..(o + 1) * d_in];
                for (dxv, &wv) in dx.iter_mut().zip(wrow) {
                    *dxv = *dxv + gv * wv;
                }
            }
        }
        Ok(dinput)
    }

    pub fn clear_cache(&mut self) {
        self.cached_input = None;
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_hand_matrix_product() {
        let mut rng = Rng::new(1);
        let mut fc = Linear::<f64>::new("fc", 3, 2, &mut rng);
        fc.weight.value = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        fc.bias.value = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let x = Tensor::from_vec(&[1, 3], vec![1.0, 0.0, -1.0]).unwrap();
        let y = fc.forward(&x, false).unwrap();
        // row0: 1*1 + 0*2 + -1*3 + 0.5 = -1.5 ; row1: 4 - 6 - 0.5 = -2.5
        assert_eq!(y.data(), &[-1.5, -2.5]);
    }

    #[test]
    fn backward_matches_hand_gradients() {
        let mut rng = Rng::new(1);
        let mut fc = Linear::<f64>::new("fc", 2, 1, &mut rng);
        fc.weight.value = Tensor::from_vec(&[1, 2], vec![3.0, -2.0]).unwrap();
        fc.bias.value = Tensor::from_vec(&[1], vec![0.0]).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![5.0, 7.0]).unwrap();
        fc.forward(&x, true).unwrap();
        let up = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let dx = fc.backward(&up).unwrap();
        assert_eq!(dx.data(), &[6.0, -4.0]);
        assert_eq!(fc.weight.value.grad().unwrap(), &[10.0, 14.0]);
        assert_eq!(fc.bias.value.grad().unwrap(), &[2.0]);
    }

    #[test]
    fn backward_without_forward_errors() {
        let mut rng = Rng::new(1);
        let mut fc = Linear::<f64>::new("fc", 2, 2, &mut rng);
        let up = Tensor::<f64>::zeros(&[1, 2]);
        assert!(matches!(fc.backward(&up), Err(Error::Usage(_))));
    }
}
