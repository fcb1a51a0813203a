//! Single LSTM cell with backpropagation through time.
//!
//! Standard gate equations, gate order [i, f, g, o] in the packed weight
//! rows:
//!   gates = x W_ih^T + h W_hh^T + b
//!   i = sigmoid, f = sigmoid, g = tanh, o = sigmoid
//!   c' = f*c + i*g
//!   h' = o * tanh(c')
//!
//! `step` pushes a cache frame; `backward_step` pops one, so a window of w
//! steps is unrolled by calling `step` w times and `backward_step` w times
//! in reverse.

use super::act::sigmoid;
use super::optim::Parameter;
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub struct LstmCell<T: Real> {
    /// [4H, D] input weights.
    pub w_ih: Parameter<T>,
    /// [4H, H] recurrent weights.
    pub w_hh: Parameter<T>,
    /// [4H] bias.
    pub bias: Parameter<T>,
    hidden: usize,
    caches: Vec<StepCache<T>>,
}

#[derive(Clone, Debug)]
struct StepCache<T: Real> {
    input: Tensor<T>,
    h_prev: Tensor<T>,
    c_prev: Tensor<T>,
    gates: Tensor<T>,
    tanh_c: Tensor<T>,
}

fn transpose<T: Real>(m: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = m[r * cols + c];
        }
    }
    out
}

impl<T: Real> LstmCell<T> {
    pub fn new(name: &str, input_dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let bound = (1.0 / hidden as f64).sqrt();
        LstmCell {
            w_ih: Parameter::new(
                &format!("{name}.w_ih"),
                Tensor::uniform(&[4 * hidden, input_dim], bound, rng),
            ),
            w_hh: Parameter::new(
                &format!("{name}.w_hh"),
                Tensor::uniform(&[4 * hidden, hidden], bound, rng),
            ),
            bias: Parameter::new(&format!("{name}.bias"), Tensor::zeros(&[4 * hidden])),
            hidden,
            caches: Vec::new(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.shape()[1]
    }

    pub fn zero_state(&self, batch: usize) -> (Tensor<T>, Tensor<T>) {
        (
            Tensor::zeros(&[batch, self.hidden]),
            Tensor::zeros(&[batch, self.hidden]),
        )
    }

    /// One timestep over a [N, D] batch. Returns (h', c').
    pub fn step(
        &mut self,
        input: &Tensor<T>,
        h_prev: &Tensor<T>,
        c_prev: &Tensor<T>,
        train: bool,
    ) -> Result<(Tensor<T>, Tensor<T>)> {
        let n = input.shape()[0];
        if input.shape().len() != 2 || input.shape()[1] != self.input_dim() {
            return Err(Error::Config(format!(
                "lstm input shape {:?} does not match input dim {}",
                input.shape(),
                self.input_dim()
            )));
        }
        for (name, t) in [("hidden", h_prev), ("cell", c_prev)] {
            if t.shape() != [n, self.hidden] {
                return Err(Error::Config(format!(
                    "lstm {name} state shape {:?} does not match [{n}, {}]",
                    t.shape(),
                    self.hidden
                )));
            }
        }
        let hsz = self.hidden;
        let d = self.input_dim();
        let mut gates = Tensor::zeros(&[n, 4 * hsz]);
        // transposed weights turn the gate pre-activation into axpy
        // updates over the 4H axis (vectorizes; no dot-product reductions)
        let wih_t = transpose(self.w_ih.value.data(), 4 * hsz, d);
        let whh_t = transpose(self.w_hh.value.data(), 4 * hsz, hsz);
        let b = self.bias.value.data();
        for bi in 0..n {
            let x = &input.data()[bi * d..(bi + 1) * d];
            let h = &h_prev.data()[bi * hsz..(bi + 1) * hsz];
            let grow = &mut gates.data_mut()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            grow.copy_from_slice(b);
            for (di, &xv) in x.iter().enumerate() {
                let wcol = &wih_t[di * 4 * hsz..(di + 1) * 4 * hsz];
                for (g, &wv) in grow.iter_mut().zip(wcol) {
                    *g = *g + xv * wv;
                }
            }
            for (hi, &hv) in h.iter().enumerate() {
                let ucol = &whh_t[hi * 4 * hsz..(hi + 1) * 4 * hsz];
                for (g, &uv) in grow.iter_mut().zip(ucol) {
                    *g = *g + hv * uv;
                }
            }
        }
        // activations in place: [i f g o] blocks of size hsz
        for bi in 0..n {
            let grow = &mut gates.data_mut()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            for (block, g) in grow.chunks_mut(hsz).enumerate() {
                for v in g.iter_mut() {
                    *v = if block == 2 { v.tanh() } else { sigmoid(*v) };
                }
            }
        }
        let mut c_new = Tensor::zeros(&[n, hsz]);
        let mut tanh_c = Tensor::zeros(&[n, hsz]);
        let mut h_new = Tensor::zeros(&[n, hsz]);
        for bi in 0..n {
            let grow = &gates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            let (gi, gf, gg, go) = (
                &grow[0..hsz],
                &grow[hsz..2 * hsz],
                &grow[2 * hsz..3 * hsz],
                &grow[3 * hsz..4 * hsz],
            );
            let cp = &c_prev.data()[bi * hsz..(bi + 1) * hsz];
            for j in 0..hsz {
                let c = gf[j] * cp[j] + gi[j] * gg[j];
                let tc = c.tanh();
                c_new.data_mut()[bi * hsz + j] = c;
                tanh_c.data_mut()[bi * hsz + j] = tc;
                h_new.data_mut()[bi * hsz + j] = go[j] * tc;
            }
        }
        if train {
            self.caches.push(StepCache {
                input: input.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                gates,
                tanh_c: tanh_c.clone(),
            });
        }
        Ok((h_new, c_new))
    }

    /// Pop one cached step and backpropagate. `dh` and `dc` are the
    /// gradients flowing into this step's outputs; returns (dx, dh_prev,
    /// dc_prev) and accumulates parameter gradients.
    pub fn backward_step(
        &mut self,
        dh: &Tensor<T>,
        dc: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let cache = self.caches.pop().ok_or_else(|| {
            Error::Usage("lstm backward_step called without a cached forward step".into())
        })?;
        let hsz = self.hidden;
        let d = self.input_dim();
        let n = cache.input.shape()[0];
        let mut dgates = Tensor::zeros(&[n, 4 * hsz]);
        let mut dc_prev = Tensor::zeros(&[n, hsz]);
        for bi in 0..n {
            let grow = &cache.gates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            let (gi, gf, gg, go) = (
                &grow[0..hsz],
                &grow[hsz..2 * hsz],
                &grow[2 * hsz..3 * hsz],
                &grow[3 * hsz..4 * hsz],
            );
            let cp = &cache.c_prev.data()[bi * hsz..(bi + 1) * hsz];
            let tc = &cache.tanh_c.data()[bi * hsz..(bi + 1) * hsz];
            let dh_row = &dh.data()[bi * hsz..(bi + 1) * hsz];
            let dc_row = &dc.data()[bi * hsz..(bi + 1) * hsz];
            let dg_row = &mut dgates.data_mut()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            for j in 0..hsz {
                let d_o = dh_row[j] * tc[j];
                let d_c = dc_row[j] + dh_row[j] * go[j] * (T::one() - tc[j] * tc[j]);
                let d_f = d_c * cp[j];
                let d_i = d_c * gg[j];
                let d_g = d_c * gi[j];
                dc_prev.data_mut()[bi * hsz + j] = d_c * gf[j];
                // through the gate nonlinearities
                dg_row[j] = d_i * gi[j] * (T::one() - gi[j]);
                dg_row[hsz + j] = d_f * gf[j] * (T::one() - gf[j]);
                dg_row[2 * hsz + j] = d_g * (T::one() - gg[j] * gg[j]);
                dg_row[3 * hsz + j] = d_o * go[j] * (T::one() - go[j]);
            }
        }
        // parameter gradients
        {
            let dwih = self.w_ih.value.grad_mut();
            for bi in 0..n {
                let dg_row = &dgates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
                let x = &cache.input.data()[bi * d..(bi + 1) * d];
                for (gi_idx, &gv) in dg_row.iter().enumerate() {
                    let wrow = &mut dwih[gi_idx * d..(gi_idx + 1) * d];
                    for (wv, &xv) in wrow.iter_mut().zip(x) {
                        *wv = *wv + gv * xv;
                    }
                }
            }
        }
        {
            let dwhh = self.w_hh.value.grad_mut();
            for bi in 0..n {
                let dg_row = &dgates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
                let h = &cache.h_prev.data()[bi * hsz..(bi + 1) * hsz];
                for (gi_idx, &gv) in dg_row.iter().enumerate() {
                    let wrow = &mut dwhh[gi_idx * hsz..(gi_idx + 1) * hsz];
                    for (wv, &hv) in wrow.iter_mut().zip(h) {
                        *wv = *wv + gv * hv;
                    }
                }
            }
        }
        {
            let db = self.bias.value.grad_mut();
            for bi in 0..n {
                let dg_row = &dgates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
                for (gi_idx, &gv) in dg_row.iter().enumerate() {
                    db[gi_idx] = db[gi_idx] + gv;
                }
            }
        }
        // input and previous-hidden gradients
        let mut dx = Tensor::zeros(&[n, d]);
        let mut dh_prev = Tensor::zeros(&[n, hsz]);
        let wih = self.w_ih.value.data();
        let whh = self.w_hh.value.data();
        for bi in 0..n {
            let dg_row = &dgates.data()[bi * 4 * hsz..(bi + 1) * 4 * hsz];
            let dx_row = &mut dx.data_mut()[bi * d..(bi + 1) * d];
            for (gi_idx, &gv) in dg_row.iter().enumerate() {
                let wrow = &wih[gi_idx * d..(gi_idx + 1) * d];
                for (dxv, &wv) in dx_row.iter_mut().zip(wrow) {
                    *dxv = *dxv + gv * wv;
                }
            }
            let dh_row = &mut dh_prev.data_mut()[bi * hsz..(bi + 1) * hsz];
            for (gi_idx, &gv) in dg_row.iter().enumerate() {
                let urow = &whh[gi_idx * hsz..(gi_idx + 1) * hsz];
                for (dhv, &uv) in dh_row.iter_mut().zip(urow) {
                    *dhv = *dhv + gv * uv;
                }
            }
        }
        Ok((dx, dh_prev, dc_prev))
    }

    pub fn clear_cache(&mut self) {
        self.caches.clear();
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let mut rng = Rng::new(1);
        let mut cell = LstmCell::<f64>::new("lstm", 4, 3, &mut rng);
        cell.w_ih.value = Tensor::zeros(&[12, 4]);
        cell.w_hh.value = Tensor::zeros(&[12, 3]);
        let (h, c) = cell.zero_state(2);
        let x = Tensor::zeros(&[2, 4]);
        let (h1, c1) = cell.step(&x, &h, &c, false).unwrap();
        assert!(h1.data().iter().all(|&v| v == 0.0));
        assert!(c1.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_is_bounded_by_one() {
        let mut rng = Rng::new(2);
        let mut cell = LstmCell::<f64>::new("lstm", 6, 5, &mut rng);
        let (mut h, mut c) = cell.zero_state(3);
        for i in 0..20 {
            let x = Tensor::uniform(&[3, 6], 5.0, &mut Rng::new(100 + i));
            let (h2, c2) = cell.step(&x, &h, &c, false).unwrap();
            h = h2;
            c = c2;
            assert!(h.data().iter().all(|&v| v.abs() <= 1.0));
            assert!(h.data().iter().all(|&v| v.is_finite()));
            assert!(c.data().iter().all(|&v| v.is_finite()));
        }
    }

    #[test]
    fn width_mismatch_is_a_configuration_error() {
        let mut rng = Rng::new(3);
        let mut cell = LstmCell::<f64>::new("lstm", 4, 3, &mut rng);
        let x = Tensor::zeros(&[1, 4]);
        let h = Tensor::zeros(&[1, 5]);
        let c = Tensor::zeros(&[1, 3]);
        assert!(matches!(cell.step(&x, &h, &c, false), Err(Error::Config(_))));
    }

    #[test]
    fn backward_without_forward_is_a_usage_error() {
        let mut rng = Rng::new(4);
        let mut cell = LstmCell::<f64>::new("lstm", 4, 3, &mut rng);
        let dh = Tensor::zeros(&[1, 3]);
        let dc = Tensor::zeros(&[1, 3]);
        assert!(matches!(
            cell.backward_step(&dh, &dc),
            Err(Error::Usage(_))
        ));
    }
}
