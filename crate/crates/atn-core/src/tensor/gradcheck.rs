//! Central finite-difference gradient checking.
//!
//! The checker never touches a layer's backward path: it re-evaluates the
//! scalar objective at perturbed inputs, so it is an independent oracle
//! for every analytic gradient in the crate. Checks run in f64.

/// Maximum relative error between an analytic gradient and the central
/// finite-difference estimate of `f` around `x0`.
///
/// Relative error per element is |a - n| / max(|a| + |n|, scale), which
/// keeps the test meaningful for near-zero gradients.
pub fn max_relative_error(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    assert_eq!(
        x0.len(),
        analytic.len(),
        "analytic gradient length must match input length"
    );
    let mut x = x0.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i];
        let denom = (a.abs() + numeric.abs()).max(1e-6);
        let rel = (a - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

/// Convenience wrapper asserting the check passes at the given tolerance.
pub fn assert_gradients_close(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    analytic: &[f64],
    step: f64,
    tol: f64,
    context: &str,
) {
    let err = max_relative_error(f, x0, analytic, step);
    assert!(
        err < tol,
        "{context}: max relative gradient error {err:.3e} exceeds {tol:.1e}"
    );
}

use super::act::{Dropout, Relu, Tanh};
use super::conv::{Conv2d, Upsample2x};
use super::linear::Linear;
use super::loss::{mse_loss, softmax_cross_entropy};
use super::lstm::LstmCell;
use super::norm::{BatchNorm, Mode};
use super::Tensor;
use crate::error::Result;
use crate::rng::Rng;

/// One checked case in the layer sweep.
#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub name: String,
    pub error: f64,
}

const FD_STEP: f64 = 1e-5;

/// Random projection vector used to reduce a tensor output to a scalar
/// objective: L = sum r_i * y_i.
fn projection(len: usize, rng: &mut Rng) -> Vec<f64> {
    (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect()
}

fn dot(r: &[f64], y: &[f64]) -> f64 {
    r.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Inputs bounded away from the ReLU kink so central differences stay
/// two-sided.
fn kink_free(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let mut t = Tensor::<f64>::uniform(shape, 1.0, rng);
    for v in t.data_mut() {
        *v = *v + 0.1 * v.signum();
        if *v == 0.0 {
            *v = 0.1;
        }
    }
    t
}

/// Finite-difference check of every differentiable layer on randomized
/// small shapes, in f64. Returns one entry per (layer, shape, argument)
/// case; callers assert `error < tol`.
pub fn layer_gradient_sweep(seed: u64) -> Result<Vec<SweepEntry>> {
    let mut rng = Rng::derive(seed, "gradsweep");
    let mut out: Vec<SweepEntry> = Vec::new();

    // conv2d: six random shapes, checking input, weight and bias grads
    for case in 0..6 {
        let kernel = [1, 3, 3, 5, 3, 2][case];
        let stride = [1, 1, 2, 2, 1, 1][case];
        let padding = [0, 1, 0, 0, 1, 0][case];
        let n = 1 + rng.below(2);
        let c = 1 + rng.below(3);
        let k_out = 1 + rng.below(3);
        let h = kernel + rng.below(5);
        let w = kernel + rng.below(5);
        let mut conv = Conv2d::<f64>::new("c", c, k_out, kernel, stride, padding, &mut rng);
        // non-trivial bias so its gradient path is exercised
        for b in conv.bias.value.data_mut() {
            *b = rng.uniform(-0.5, 0.5);
        }
        let x = Tensor::uniform(&[n, c, h, w], 1.0, &mut rng);
        let y = conv.forward(&x, true)?;
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.iter().map(|&v| v).collect())?;
        let dx = conv.backward(&up)?;
        let tag = format!("conv2d k{kernel} s{stride} p{padding} [{n},{c},{h},{w}]");

        let conv_ref = conv.clone();
        let x_ref = x.clone();
        let mut f_input = |vals: &[f64]| {
            let mut cl = conv_ref.clone();
            let xt = Tensor::from_vec(x_ref.shape(), vals.to_vec()).unwrap();
            let y = cl.forward(&xt, false).unwrap();
            dot(&r, y.data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / input"),
            error: max_relative_error(&mut f_input, x.data(), dx.data(), FD_STEP),
        });

        let mut f_weight = |vals: &[f64]| {
            let mut cl = conv_ref.clone();
            cl.weight.value.data_mut().copy_from_slice(vals);
            let y = cl.forward(&x_ref, false).unwrap();
            dot(&r, y.data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / weight"),
            error: max_relative_error(
                &mut f_weight,
                conv.weight.value.data(),
                conv.weight.value.grad().unwrap(),
                FD_STEP,
            ),
        });

        let mut f_bias = |vals: &[f64]| {
            let mut cl = conv_ref.clone();
            cl.bias.value.data_mut().copy_from_slice(vals);
            let y = cl.forward(&x_ref, false).unwrap();
            dot(&r, y.data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / bias"),
            error: max_relative_error(
                &mut f_bias,
                conv.bias.value.data(),
                conv.bias.value.grad().unwrap(),
                FD_STEP,
            ),
        });
    }

    // fully connected: four random shapes
    for _ in 0..4 {
        let n = 1 + rng.below(3);
        let d_in = 1 + rng.below(6);
        let d_out = 1 + rng.below(5);
        let mut fc = Linear::<f64>::new("fc", d_in, d_out, &mut rng);
        for b in fc.bias.value.data_mut() {
            *b = rng.uniform(-0.5, 0.5);
        }
        let x = Tensor::uniform(&[n, d_in], 1.0, &mut rng);
        let y = fc.forward(&x, true)?;
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = fc.backward(&up)?;
        let tag = format!("linear [{n},{d_in}]->[{n},{d_out}]");

        let fc_ref = fc.clone();
        let x_ref = x.clone();
        let mut f_input = |vals: &[f64]| {
            let mut cl = fc_ref.clone();
            let xt = Tensor::from_vec(x_ref.shape(), vals.to_vec()).unwrap();
            dot(&r, cl.forward(&xt, false).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / input"),
            error: max_relative_error(&mut f_input, x.data(), dx.data(), FD_STEP),
        });
        let mut f_weight = |vals: &[f64]| {
            let mut cl = fc_ref.clone();
            cl.weight.value.data_mut().copy_from_slice(vals);
            dot(&r, cl.forward(&x_ref, false).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / weight"),
            error: max_relative_error(
                &mut f_weight,
                fc.weight.value.data(),
                fc.weight.value.grad().unwrap(),
                FD_STEP,
            ),
        });
        let mut f_bias = |vals: &[f64]| {
            let mut cl = fc_ref.clone();
            cl.bias.value.data_mut().copy_from_slice(vals);
            dot(&r, cl.forward(&x_ref, false).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / bias"),
            error: max_relative_error(
                &mut f_bias,
                fc.bias.value.data(),
                fc.bias.value.grad().unwrap(),
                FD_STEP,
            ),
        });
    }

    // batch normalization: four random train-mode shapes
    for _ in 0..4 {
        let n = 2 + rng.below(3);
        let c = 1 + rng.below(3);
        let h = 1 + rng.below(4);
        let w = 1 + rng.below(4);
        let mut bn = BatchNorm::<f64>::new("bn", c);
        for g in bn.gamma.value.data_mut() {
            *g = rng.uniform(0.5, 1.5);
        }
        for b in bn.beta.value.data_mut() {
            *b = rng.uniform(-0.5, 0.5);
        }
        let x = Tensor::uniform(&[n, c, h, w], 1.0, &mut rng);
        let y = bn.forward(&x, Mode::Train)?;
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = bn.backward(&up)?;
        let tag = format!("batchnorm [{n},{c},{h},{w}]");

        let bn_ref = bn.clone();
        let x_ref = x.clone();
        let mut f_input = |vals: &[f64]| {
            let mut cl = bn_ref.clone();
            let xt = Tensor::from_vec(x_ref.shape(), vals.to_vec()).unwrap();
            dot(&r, cl.forward(&xt, Mode::Train).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / input"),
            error: max_relative_error(&mut f_input, x.data(), dx.data(), FD_STEP),
        });
        let mut f_gamma = |vals: &[f64]| {
            let mut cl = bn_ref.clone();
            cl.gamma.value.data_mut().copy_from_slice(vals);
            dot(&r, cl.forward(&x_ref, Mode::Train).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / gamma"),
            error: max_relative_error(
                &mut f_gamma,
                bn.gamma.value.data(),
                bn.gamma.value.grad().unwrap(),
                FD_STEP,
            ),
        });
        let mut f_beta = |vals: &[f64]| {
            let mut cl = bn_ref.clone();
            cl.beta.value.data_mut().copy_from_slice(vals);
            dot(&r, cl.forward(&x_ref, Mode::Train).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("{tag} / beta"),
            error: max_relative_error(
                &mut f_beta,
                bn.beta.value.data(),
                bn.beta.value.grad().unwrap(),
                FD_STEP,
            ),
        });
    }

    // LSTM: three random sizes, gradient through 3 chained steps
    for _ in 0..3 {
        let n = 1 + rng.below(2);
        let d = 1 + rng.below(4);
        let hsz = 1 + rng.below(4);
        let steps = 3usize;
        let mut cell = LstmCell::<f64>::new("lstm", d, hsz, &mut rng);
        for b in cell.bias.value.data_mut() {
            *b = rng.uniform(-0.3, 0.3);
        }
        let xs: Vec<Tensor<f64>> = (0..steps)
            .map(|_| Tensor::uniform(&[n, d], 1.0, &mut rng))
            .collect();
        let (mut h, mut c) = cell.zero_state(n);
        for x in &xs {
            let (h2, c2) = cell.step(x, &h, &c, true)?;
            h = h2;
            c = c2;
        }
        let r = projection(h.len(), &mut rng);
        let mut dh = Tensor::from_vec(h.shape(), r.clone())?;
        let mut dc = Tensor::zeros(c.shape());
        let mut dxs = vec![Tensor::<f64>::zeros(&[n, d]); steps];
        for s in (0..steps).rev() {
            let (dx, dh_prev, dc_prev) = cell.backward_step(&dh, &dc)?;
            dxs[s] = dx;
            dh = dh_prev;
            dc = dc_prev;
        }
        let tag = format!("lstm d{d} h{hsz} n{n} x3 steps");

        let cell_ref = {
            let mut cl = cell.clone();
            cl.clear_cache();
            cl
        };
        let xs_ref = xs.clone();
        let run_chain = |cl: &mut LstmCell<f64>, xs: &[Tensor<f64>]| -> Vec<f64> {
            let (mut h, mut c) = cl.zero_state(n);
            for x in xs {
                let (h2, c2) = cl.step(x, &h, &c, false).unwrap();
                h = h2;
                c = c2;
            }
            h.into_data()
        };

        // gradient w.r.t. the oldest input (flows through all 3 steps)
        let mut f_x0 = |vals: &[f64]| {
            let mut cl = cell_ref.clone();
            let mut xs2 = xs_ref.clone();
            xs2[0] = Tensor::from_vec(&[n, d], vals.to_vec()).unwrap();
            dot(&r, &run_chain(&mut cl, &xs2))
        };
        out.push(SweepEntry {
            name: format!("{tag} / x0"),
            error: max_relative_error(&mut f_x0, xs[0].data(), dxs[0].data(), FD_STEP),
        });
        let mut f_wih = |vals: &[f64]| {
            let mut cl = cell_ref.clone();
            cl.w_ih.value.data_mut().copy_from_slice(vals);
            dot(&r, &run_chain(&mut cl, &xs_ref))
        };
        out.push(SweepEntry {
            name: format!("{tag} / w_ih"),
            error: max_relative_error(
                &mut f_wih,
                cell.w_ih.value.data(),
                cell.w_ih.value.grad().unwrap(),
                FD_STEP,
            ),
        });
        let mut f_whh = |vals: &[f64]| {
            let mut cl = cell_ref.clone();
            cl.w_hh.value.data_mut().copy_from_slice(vals);
            dot(&r, &run_chain(&mut cl, &xs_ref))
        };
        out.push(SweepEntry {
            name: format!("{tag} / w_hh"),
            error: max_relative_error(
                &mut f_whh,
                cell.w_hh.value.data(),
                cell.w_hh.value.grad().unwrap(),
                FD_STEP,
            ),
        });
    }

    // ReLU and Tanh through their layer forms
    for _ in 0..2 {
        let n = 2 + rng.below(6);
        let x = kink_free(&[n], &mut rng);
        let mut layer = Relu::<f64>::default();
        let y = layer.forward(&x, true);
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = layer.backward(&up)?;
        let mut f = |vals: &[f64]| {
            let xt = Tensor::from_vec(&[n], vals.to_vec()).unwrap();
            dot(&r, Relu::default().forward(&xt, false).data())
        };
        out.push(SweepEntry {
            name: format!("relu [{n}]"),
            error: max_relative_error(&mut f, x.data(), dx.data(), FD_STEP),
        });

        let x = Tensor::uniform(&[n], 2.0, &mut rng);
        let mut layer = Tanh::<f64>::default();
        let y = layer.forward(&x, true);
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = layer.backward(&up)?;
        let mut f = |vals: &[f64]| {
            let xt = Tensor::from_vec(&[n], vals.to_vec()).unwrap();
            dot(&r, Tanh::default().forward(&xt, false).data())
        };
        out.push(SweepEntry {
            name: format!("tanh [{n}]"),
            error: max_relative_error(&mut f, x.data(), dx.data(), FD_STEP),
        });
    }

    // dropout with a fixed mask seed
    {
        let n = 40;
        let x = Tensor::uniform(&[n], 1.0, &mut rng);
        let mut layer = Dropout::<f64>::new(0.4)?;
        let mask_seed = rng.next_u64();
        let y = layer.forward(&x, true, &mut Rng::new(mask_seed));
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = layer.backward(&up)?;
        let mut f = |vals: &[f64]| {
            let xt = Tensor::from_vec(&[n], vals.to_vec()).unwrap();
            let mut l = Dropout::<f64>::new(0.4).unwrap();
            dot(&r, l.forward(&xt, true, &mut Rng::new(mask_seed)).data())
        };
        out.push(SweepEntry {
            name: format!("dropout 0.4 [{n}]"),
            error: max_relative_error(&mut f, x.data(), dx.data(), FD_STEP),
        });
    }

    // nearest upsample
    for _ in 0..2 {
        let (n, c, h, w) = (1, 1 + rng.below(2), 2 + rng.below(3), 2 + rng.below(3));
        let x = Tensor::uniform(&[n, c, h, w], 1.0, &mut rng);
        let mut layer = Upsample2x::default();
        let y = layer.forward(&x, true)?;
        let r = projection(y.len(), &mut rng);
        let up = Tensor::from_vec(y.shape(), r.clone())?;
        let dx = layer.backward(&up)?;
        let mut f = |vals: &[f64]| {
            let xt = Tensor::from_vec(&[n, c, h, w], vals.to_vec()).unwrap();
            dot(&r, Upsample2x::default().forward(&xt, false).unwrap().data())
        };
        out.push(SweepEntry {
            name: format!("upsample2x [{n},{c},{h},{w}]"),
            error: max_relative_error(&mut f, x.data(), dx.data(), FD_STEP),
        });
    }

    // losses
    {
        let n = 6;
        let pred = Tensor::uniform(&[n], 2.0, &mut rng);
        let target = Tensor::uniform(&[n], 2.0, &mut rng);
        let (_, grad) = mse_loss(&pred, &target)?;
        let t_ref = target.clone();
        let mut f = |vals: &[f64]| {
            let p = Tensor::from_vec(&[n], vals.to_vec()).unwrap();
            mse_loss(&p, &t_ref).unwrap().0
        };
        out.push(SweepEntry {
            name: format!("mse [{n}]"),
            error: max_relative_error(&mut f, pred.data(), grad.data(), FD_STEP),
        });

        let (rows, k) = (3, 5);
        let logits = Tensor::uniform(&[rows, k], 2.0, &mut rng);
        let labels: Vec<usize> = (0..rows).map(|_| rng.below(k)).collect();
        let (_, grad) = softmax_cross_entropy(&logits, &labels)?;
        let labels_ref = labels.clone();
        let mut f = |vals: &[f64]| {
            let l = Tensor::from_vec(&[rows, k], vals.to_vec()).unwrap();
            softmax_cross_entropy(&l, &labels_ref).unwrap().0
        };
        out.push(SweepEntry {
            name: format!("softmax_ce [{rows},{k}]"),
            error: max_relative_error(&mut f, logits.data(), grad.data(), FD_STEP),
        });
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_checks_out() {
        // f(x) = sum x_i^2, grad = 2x
        let x0 = vec![0.5, -1.25, 2.0];
        let analytic: Vec<f64> = x0.iter().map(|v| 2.0 * v).collect();
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let err = max_relative_error(&mut f, &x0, &analytic, 1e-5);
        assert!(err < 1e-8, "err {err}");
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let x0 = vec![0.5, -1.25];
        let analytic = vec![1.0, 1.0];
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum();
        let err = max_relative_error(&mut f, &x0, &analytic, 1e-5);
        assert!(err > 0.1);
    }
}
