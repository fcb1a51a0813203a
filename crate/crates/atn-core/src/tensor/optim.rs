//! Adam optimizer and the halving-on-plateau learning-rate schedule.

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Trainable tensor with Adam moment state.
#[derive(Clone, Debug)]
pub struct Parameter<T: Real> {
    pub name: String,
    pub value: Tensor<T>,
    pub first_moment: Tensor<T>,
    pub second_moment: Tensor<T>,
    pub step_count: u64,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: &str, value: Tensor<T>) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.to_string(),
            value,
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
            step_count: 0,
        }
    }

    /// Accumulate `g` into the gradient buffer.
    pub fn add_grad(&mut self, g: &[T]) {
        let grad = self.value.grad_mut();
        debug_assert_eq!(grad.len(), g.len());
        for (dst, &src) in grad.iter_mut().zip(g) {
            *dst = *dst + src;
        }
    }

    pub fn zero_grad(&mut self) {
        self.value.zero_grad();
    }
}

/// Adam hyperparameters plus the plateau-halving schedule settings.
///
/// `learning_rate` only ever decreases during a run, and every decrease is
/// an exact multiplication by `halving_factor`.
#[derive(Clone, Debug)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_patience: usize,
    pub plateau_min_delta: f64,
    pub halving_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_patience: 3,
            plateau_min_delta: 1e-3,
            halving_factor: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < b && b < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {b}")));
            }
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Config("plateau_patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// One bias-corrected Adam step over every parameter, consuming and
/// clearing the accumulated gradients.
///
/// A NaN or infinite gradient aborts with a diagnostic naming the
/// offending parameter.
pub fn adam_step<T: Real>(
    params: &mut [&mut Parameter<T>],
    config: &OptimizerConfig,
    learning_rate: f64,
) -> Result<()> {
    for p in params.iter_mut() {
        let t = p.step_count + 1;
        let beta1 = T::from_f64(config.beta1);
        let beta2 = T::from_f64(config.beta2);
        let one = T::one();
        let corr1 = T::from_f64(1.0 - config.beta1.powi(t as i32));
        let corr2 = T::from_f64(1.0 - config.beta2.powi(t as i32));
        let lr = T::from_f64(learning_rate);
        let eps = T::from_f64(config.epsilon);

        let n = p.value.len();
        let grad = match p.value.grad() {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); n],
        };
        for (i, &g) in grad.iter().enumerate() {
            if !g.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter '{}' (element {i}) is {g}",
                    p.name
                )));
            }
            let m = beta1 * p.first_moment.data()[i] + (one - beta1) * g;
            let v = beta2 * p.second_moment.data()[i] + (one - beta2) * g * g;
            p.first_moment.data_mut()[i] = m;
            p.second_moment.data_mut()[i] = v;
            let m_hat = m / corr1;
            let v_hat = v / corr2;
            let val = p.value.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
            p.value.data_mut()[i] = val;
        }
        p.step_count = t;
        p.value.ensure_finite(&format!("parameter '{}' after adam step", p.name))?;
        p.zero_grad();
    }
    Ok(())
}

/// Halves the learning rate whenever the best validation loss has not
/// improved by more than `min_delta` for `patience` consecutive epochs.
/// The rate never increases.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    learning_rate: f64,
    best: f64,
    stale_epochs: usize,
    patience: usize,
    min_delta: f64,
    factor: f64,
}

impl PlateauScheduler {
    pub fn new(config: &OptimizerConfig) -> Self {
        PlateauScheduler {
            learning_rate: config.learning_rate,
            best: f64::INFINITY,
            stale_epochs: 0,
            patience: config.plateau_patience,
            min_delta: config.plateau_min_delta,
            factor: config.halving_factor,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Record one epoch's validation loss; returns the rate to use next.
    pub fn observe(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.patience {
                self.learning_rate *= self.factor;
                self.stale_epochs = 0;
            }
        }
        self.learning_rate
    }

    /// Restore scheduler state (used when resuming from a checkpoint).
    pub fn restore(&mut self, learning_rate: f64, best: f64, stale_epochs: usize) {
        self.learning_rate = learning_rate;
        self.best = best;
        self.stale_epochs = stale_epochs;
    }

    pub fn state(&self) -> (f64, f64, usize) {
        (self.learning_rate, self.best, self.stale_epochs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grad_param(n: usize) -> Parameter<f64> {
        let mut p = Parameter::new("w", Tensor::zeros(&[n]));
        p.add_grad(&vec![1.0; n]);
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Bias correction makes m_hat = v_hat = 1 on the first step for a
        // unit gradient, so the update is lr / (1 + eps) ~= lr.
        let mut p = unit_grad_param(5);
        let cfg = OptimizerConfig::default();
        adam_step(&mut [&mut p], &cfg, cfg.learning_rate).unwrap();
        for &v in p.value.data() {
            assert!((v + 0.001).abs() < 1e-9, "got {v}");
        }
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = Parameter::new("w", Tensor::<f64>::full(&[4], 0.75));
        let cfg = OptimizerConfig::default();
        for _ in 0..10 {
            adam_step(&mut [&mut p], &cfg, cfg.learning_rate).unwrap();
        }
        assert!(p.value.data().iter().all(|&v| v == 0.75));
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let run = || {
            let mut p = Parameter::new("w", Tensor::<f32>::full(&[8], 0.3));
            let cfg = OptimizerConfig::default();
            for step in 0..25 {
                let g: Vec<f32> = (0..8).map(|i| ((i + step) as f32 * 0.1).sin()).collect();
                p.add_grad(&g);
                adam_step(&mut [&mut p], &cfg, cfg.learning_rate).unwrap();
            }
            p.value.data().to_vec()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = Parameter::new("conv1.weight", Tensor::<f64>::zeros(&[3]));
        p.add_grad(&[0.0, f64::NAN, 0.0]);
        let cfg = OptimizerConfig::default();
        let err = adam_step(&mut [&mut p], &cfg, cfg.learning_rate).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("conv1.weight"), "message was: {msg}");
    }

    #[test]
    fn plateau_halves_after_patience_flat_epochs() {
        let cfg = OptimizerConfig::default();
        let mut sched = PlateauScheduler::new(&cfg);
        assert_eq!(sched.observe(1.0), 0.001);
        assert_eq!(sched.observe(1.0), 0.001);
        assert_eq!(sched.observe(1.0), 0.001);
        // fourth flat epoch is the third consecutive non-improvement
        assert_eq!(sched.observe(1.0), 0.0005);
    }

    #[test]
    fn decreasing_losses_keep_rate() {
        let cfg = OptimizerConfig::default();
        let mut sched = PlateauScheduler::new(&cfg);
        for i in 0..12 {
            let rate = sched.observe(1.0 - 0.05 * i as f64);
            assert_eq!(rate, 0.001);
        }
    }

    #[test]
    fn two_plateaus_quarter_the_rate() {
        let cfg = OptimizerConfig::default();
        let mut sched = PlateauScheduler::new(&cfg);
        let mut last = 0.0;
        for _ in 0..7 {
            last = sched.observe(2.0);
        }
        assert_eq!(last, 0.00025);
    }

    #[test]
    fn rate_changes_are_exact_halvings_and_non_increasing() {
        let cfg = OptimizerConfig::default();
        let mut sched = PlateauScheduler::new(&cfg);
        let mut rng = crate::rng::Rng::new(5);
        let mut prev = sched.learning_rate();
        for _ in 0..200 {
            let rate = sched.observe(rng.uniform(0.0, 1.0));
            assert!(rate <= prev);
            assert!(rate == prev || rate == prev * 0.5);
            prev = rate;
        }
    }
}
