//! Batch normalization over the channel axis of [N, C, H, W] tensors.

use super::optim::Parameter;
use super::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug)]
pub struct BatchNorm<T: Real> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub epsilon: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Clone, Debug)]
struct BnCache<T: Real> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: Parameter::new(&format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: Parameter::new(&format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: 0.1,
            epsilon: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.channels() {
            return Err(Error::Config(format!(
                "batchnorm expects [N, {}, H, W], got {s:?}",
                self.channels()
            )));
        }
        let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
        if mode == Mode::Train && n < 2 {
            return Err(Error::Usage(
                "batchnorm in train mode requires batch size >= 2".into(),
            ));
        }
        let plane = h * w;
        let m = n * plane;
        let eps = T::from_f64(self.epsilon);
        let mut out = Tensor::zeros(s);
        match mode {
            Mode::Train => {
                let mut normalized = Tensor::zeros(s);
                let mut inv_std = vec![T::zero(); c];
                for ci in 0..c {
                    let mut sum = T::zero();
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for &v in &input.data()[base..base + plane] {
                            sum = sum + v;
                        }
                    }
                    let mean = sum / T::from_f64(m as f64);
                    let mut var_sum = T::zero();
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for &v in &input.data()[base..base + plane] {
                            let d = v - mean;
                            var_sum = var_sum + d * d;
                        }
                    }
                    let var = var_sum / T::from_f64(m as f64);
                    let istd = T::one() / (var + eps).sqrt();
                    inv_std[ci] = istd;
                    let g = self.gamma.value.data()[ci];
                    let bt = self.beta.value.data()[ci];
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for i in base..base + plane {
                            let d = input.data()[i] - mean;
                            let xn = d * istd;
                            normalized.data_mut()[i] = xn;
                            out.data_mut()[i] = g * xn + bt;
                        }
                    }
                    let mom = T::from_f64(self.momentum);
                    let keep = T::from_f64(1.0 - self.momentum);
                    self.running_mean.data_mut()[ci] =
                        keep * self.running_mean.data()[ci] + mom * mean;
                    self.running_var.data_mut()[ci] =
                        keep * self.running_var.data()[ci] + mom * var;
                }
                self.cache = Some(BnCache {
                    normalized,
                    inv_std,
                });
            }
            Mode::Infer => {
                for ci in 0..c {
                    let mean = self.running_mean.data()[ci];
                    let istd = T::one() / (self.running_var.data()[ci] + eps).sqrt();
                    let g = self.gamma.value.data()[ci];
                    let bt = self.beta.value.data()[ci];
                    for b in 0..n {
                        let base = (b * c + ci) * plane;
                        for i in base..base + plane {
                            out.data_mut()[i] = g * (input.data()[i] - mean) * istd + bt;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Usage("batchnorm backward called without a cached training forward".into())
        })?;
        let s = upstream.shape();
        let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
        let plane = h * w;
        let m = n * plane;
        let m_t = T::from_f64(m as f64);
        let mut dinput = Tensor::zeros(s);
        for ci in 0..c {
            let g = self.gamma.value.data()[ci];
            let istd = cache.inv_std[ci];
            // channel reductions: sum g_i and sum g_i * xhat_i
            let mut sum_dy = T::zero();
            let mut sum_dy_xn = T::zero();
            for b in 0..n {
                let base = (b * c + ci) * plane;
                for i in base..base + plane {
                    let dy = upstream.data()[i];
                    sum_dy = sum_dy + dy;
                    sum_dy_xn = sum_dy_xn + dy * cache.normalized.data()[i];
                }
            }
            self.beta.value.grad_mut()[ci] = self.beta.value.grad_mut()[ci] + sum_dy;
            self.gamma.value.grad_mut()[ci] = self.gamma.value.grad_mut()[ci] + sum_dy_xn;
            // dx = (gamma * istd / m) * (m*dy - sum_dy - xhat * sum_dy_xn)
            let scale = g * istd / m_t;
            for b in 0..n {
                let base = (b * c + ci) * plane;
                for i in base..base + plane {
                    let dy = upstream.data()[i];
                    let xn = cache.normalized.data()[i];
                    dinput.data_mut()[i] = scale * (m_t * dy - sum_dy - xn * sum_dy_xn);
                }
            }
        }
        Ok(dinput)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_channel_normalizes_to_zero_pre_affine() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        let x = Tensor::full(&[4, 1, 2, 2], 3.7);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for &v in y.data() {
            assert!(v.abs() < 1e-9, "got {v}");
        }
    }

    #[test]
    fn two_sample_batch_normalizes_to_plus_minus_one() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        let x = Tensor::from_vec(&[2, 1, 1, 1], vec![-1.0, 1.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-2);
        assert!((y.data()[1] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn train_mode_output_has_unit_stats_per_channel() {
        let mut bn = BatchNorm::<f64>::new("bn", 3);
        let mut rng = Rng::new(8);
        let x = Tensor::uniform(&[6, 3, 4, 4], 2.0, &mut rng);
        let y = bn.forward(&x, Mode::Train).unwrap();
        let plane = 16;
        for c in 0..3 {
            let mut vals = Vec::new();
            for b in 0..6 {
                let base = (b * 3 + c) * plane;
                vals.extend_from_slice(&y.data()[base..base + plane]);
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn batch_of_one_in_train_mode_is_a_usage_error() {
        let mut bn = BatchNorm::<f64>::new("bn", 1);
        let x = Tensor::zeros(&[1, 1, 2, 2]);
        assert!(matches!(bn.forward(&x, Mode::Train), Err(Error::Usage(_))));
    }

    #[test]
    fn infer_mode_is_deterministic_and_repeatable() {
        let mut bn = BatchNorm::<f32>::new("bn", 2);
        let mut rng = Rng::new(3);
        let warm = Tensor::uniform(&[4, 2, 3, 3], 1.0, &mut rng);
        bn.forward(&warm, Mode::Train).unwrap();
        let x = Tensor::uniform(&[1, 2, 3, 3], 1.0, &mut rng);
        let a = bn.forward(&x, Mode::Infer).unwrap();
        let b = bn.forward(&x, Mode::Infer).unwrap();
        assert_eq!(a.data(), b.data());
    }
}
