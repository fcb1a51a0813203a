//! Strided 2-D convolution (valid or zero-padded) and nearest-neighbor
//! 2x upsampling, with explicit backward passes.
//!
//! Convolution runs as whole-batch im2col + one GEMM per layer: columns
//! from every batch element sit in one [C*KH*KW, N*OH*OW] matrix, so the
//! GEMM inner loops stay long even for small feature maps. The buffer is
//! cached by the training forward and reused by backward. Everything is
//! serial with a fixed evaluation order, which keeps training
//! bit-reproducible.

use super::optim::Parameter;
use super::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Convolution layer: weight [K, C, KH, KW], bias [K].
#[derive(Debug)]
pub struct Conv2d<T: Real> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub padding: usize,
    cache: Option<ConvCache<T>>,
    scratch: Scratch<T>,
}

/// Reused working buffers; cloning a layer starts them empty.
#[derive(Debug, Default)]
struct Scratch<T: Real> {
    gemm_out: Vec<T>,
    up: Vec<T>,
    dcols: Vec<T>,
    block: Vec<T>,
    block_t: Vec<T>,
}

impl<T: Real> Clone for Conv2d<T> {
    fn clone(&self) -> Self {
        Conv2d {
            weight: self.weight.clone(),
            bias: self.bias.clone(),
            stride: self.stride,
            padding: self.padding,
            cache: self.cache.clone(),
            scratch: Scratch::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct ConvCache<T: Real> {
    input_shape: [usize; 4],
    /// Whole-batch im2col, [C*KH*KW, N*OH*OW] row-major.
    cols: Vec<T>,
    out_hw: (usize, usize),
}

/// Output extent of a valid/padded strided convolution along one axis.
fn conv_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::Config(format!(
            "kernel size {kernel} exceeds padded input extent {padded}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

impl<T: Real> Conv2d<T> {
    /// He-uniform initialized layer.
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let weight = Tensor::uniform(&[out_channels, in_channels, kernel, kernel], bound, rng);
        let bias = Tensor::zeros(&[out_channels]);
        Conv2d {
            weight: Parameter::new(&format!("{name}.weight"), weight),
            bias: Parameter::new(&format!("{name}.bias"), bias),
            stride,
            padding,
            cache: None,
            scratch: Scratch::default(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn output_shape(&self, input_shape: &[usize]) -> Result<[usize; 4]> {
        if input_shape.len() != 4 {
            return Err(Error::Config(format!(
                "conv2d expects [N,C,H,W] input, got shape {input_shape:?}"
            )));
        }
        let [n, c, h, w] = [input_shape[0], input_shape[1], input_shape[2], input_shape[3]];
        if c != self.in_channels() {
            return Err(Error::Config(format!(
                "conv2d channel mismatch: input shape {:?} vs weight shape {:?}",
                input_shape,
                self.weight.value.shape()
            )));
        }
        let k = self.kernel();
        let oh = conv_extent(h, k, self.stride, self.padding)?;
        let ow = conv_extent(w, k, self.stride, self.padding)?;
        Ok([n, self.out_channels(), oh, ow])
    }

    /// Forward pass. With `train` the im2col buffer is cached for
    /// `backward`; in inference mode no cache is kept.
    pub fn forward(&mut self, input: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let [_, k_out, oh, ow] = self.output_shape(input.shape())?;
        let s = input.shape();
        let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
        let kernel = self.kernel();
        let ckk = c * kernel * kernel;
        let p = oh * ow;
        let np = n * p;

        let cols = im2col_batch(
            input.data(),
            n,
            c,
            h,
            w,
            kernel,
            self.stride,
            self.padding,
            oh,
            ow,
        );
        // out[k, n*p] = W[k, ckk] x cols[ckk, n*p] + bias, then regroup
        // to [n, k, p]. Column-blocked with the output block held hot:
        // each cols row is streamed once per block while all k output
        // rows accumulate in cache.
        let wdata = self.weight.value.data();
        let bdata = self.bias.value.data();
        resize(&mut self.scratch.gemm_out, k_out * np);
        let gemm_out = &mut self.scratch.gemm_out;
        const NB: usize = 512;
        resize(&mut self.scratch.block, k_out * NB);
        let block = &mut self.scratch.block;
        let mut start = 0usize;
        while start < np {
            let len = NB.min(np - start);
            for ko in 0..k_out {
                let bias = bdata[ko];
                block[ko * NB..ko * NB + len].iter_mut().for_each(|v| *v = bias);
            }
            for i in 0..ckk {
                let crow = &cols[i * np + start..i * np + start + len];
                for ko in 0..k_out {
                    let wv = wdata[ko * ckk + i];
                    let orow = &mut block[ko * NB..ko * NB + len];
                    for (o, &cv) in orow.iter_mut().zip(crow) {
                        *o = *o + wv * cv;
                    }
                }
            }
            for ko in 0..k_out {
                gemm_out[ko * np + start..ko * np + start + len]
                    .copy_from_slice(&block[ko * NB..ko * NB + len]);
            }
            start += len;
        }
        let mut out = Tensor::zeros(&[n, k_out, oh, ow]);
        for b in 0..n {
            for ko in 0..k_out {
                let src = &gemm_out[ko * np + b * p..ko * np + (b + 1) * p];
                out.data_mut()[(b * k_out + ko) * p..(b * k_out + ko + 1) * p]
                    .copy_from_slice(src);
            }
        }
        if train {
            self.cache = Some(ConvCache {
                input_shape: [n, c, h, w],
                cols,
                out_hw: (oh, ow),
            });
        }
        Ok(out)
    }

    /// Backward pass: accumulates weight/bias gradients, returns the
    /// input gradient. Requires a cached training forward.
    pub fn backward(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::Usage("conv2d backward called without a cached forward pass".into())
        })?;
        let [n, c, h, w] = cache.input_shape;
        let (oh, ow) = cache.out_hw;
        let k_out = self.out_channels();
        let kernel = self.kernel();
        let ckk = c * kernel * kernel;
        let p = oh * ow;
        let np = n * p;
        if upstream.shape() != [n, k_out, oh, ow] {
            return Err(Error::Usage(format!(
                "conv2d upstream shape {:?} does not match forward output [{n}, {k_out}, {oh}, {ow}]",
                upstream.shape()
            )));
        }

        // regroup upstream to [k, n*p]
        resize(&mut self.scratch.up, k_out * np);
        let up = &mut self.scratch.up;
        for b in 0..n {
            for ko in 0..k_out {
                let src = &upstream.data()[(b * k_out + ko) * p..(b * k_out + ko + 1) * p];
                up[ko * np + b * p..ko * np + (b + 1) * p].copy_from_slice(src);
            }
        }

        // dW[k, i] = sum_np up[k, np] * cols[i, np]: transpose one column
        // block at a time (stays cache-hot) and accumulate axpy rows into
        // the small dW matrix
        const NB: usize = 512;
        resize(&mut self.scratch.block_t, NB * ckk);
        let block_t = &mut self.scratch.block_t;
        {
            let dw = self.weight.value.grad_mut();
            let mut start = 0usize;
            while start < np {
                let len = NB.min(np - start);
                for i in 0..ckk {
                    let crow = &cache.cols[i * np + start..i * np + start + len];
                    for (pi, &cv) in crow.iter().enumerate() {
                        block_t[pi * ckk + i] = cv;
                    }
                }
                for pi in 0..len {
                    let crow = &block_t[pi * ckk..(pi + 1) * ckk];
                    for ko in 0..k_out {
                        let u = up[ko * np + start + pi];
                        if u == T::zero() {
                            continue;
                        }
                        let dwrow = &mut dw[ko * ckk..(ko + 1) * ckk];
                        for (dwv, &cv) in dwrow.iter_mut().zip(crow) {
                            *dwv = *dwv + u * cv;
                        }
                    }
                }
                start += len;
            }
        }
        {
            let db = self.bias.value.grad_mut();
            for ko in 0..k_out {
                let mut acc = T::zero();
                for &u in &up[ko * np..(ko + 1) * np] {
                    acc = acc + u;
                }
                db[ko] = db[ko] + acc;
            }
        }

        // dcols[i, np] = sum_k W[k, i] * up[k, np], column-blocked with
        // the dcols block hot across the k loop
        resize(&mut self.scratch.dcols, ckk * np);
        let dcols = &mut self.scratch.dcols;
        let wdata = self.weight.value.data();
        resize(&mut self.scratch.block, ckk * NB);
        let block = &mut self.scratch.block;
        let mut start = 0usize;
        while start < np {
            let len = NB.min(np - start);
            block.iter_mut().for_each(|v| *v = T::zero());
            for ko in 0..k_out {
                let urow = &up[ko * np + start..ko * np + start + len];
                let wrow = &wdata[ko * ckk..(ko + 1) * ckk];
                for (i, &wv) in wrow.iter().enumerate() {
                    let drow = &mut block[i * NB..i * NB + len];
                    for (d, &u) in drow.iter_mut().zip(urow) {
                        *d = *d + wv * u;
                    }
                }
            }
            for i in 0..ckk {
                dcols[i * np + start..i * np + start + len]
                    .copy_from_slice(&block[i * NB..i * NB + len]);
            }
            start += len;
        }
        let mut dinput = Tensor::zeros(&[n, c, h, w]);
        col2im_add_batch(
            dcols,
            dinput.data_mut(),
            n,
            c,
            h,
            w,
            kernel,
            self.stride,
            self.padding,
            oh,
            ow,
        );
        Ok(dinput)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }

    pub fn params_mut(&mut self) -> [&mut Parameter<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

fn resize<T: Real>(buf: &mut Vec<T>, len: usize) {
    if buf.len() != len {
        buf.clear();
        buf.resize(len, T::zero());
    }
}

/// Whole-batch im2col: column index is b*OH*OW + oy*OW + ox.
#[allow(clippy::too_many_arguments)]
fn im2col_batch<T: Real>(
    input: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let p = oh * ow;
    let np = n * p;
    let mut cols = vec![T::zero(); c * kernel * kernel * np];
    for b in 0..n {
        let sample = &input[b * c * h * w..(b + 1) * c * h * w];
        let mut row = 0usize;
        for ci in 0..c {
            let plane = &sample[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let dst = &mut cols[row * np + b * p..row * np + (b + 1) * p];
                    row += 1;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if padding == 0 {
                            // fast contiguous path for stride 1 or plain gather
                            if stride == 1 {
                                drow.copy_from_slice(&src_row[kx..kx + ow]);
                            } else {
                                for (ox, d) in drow.iter_mut().enumerate() {
                                    *d = src_row[ox * stride + kx];
                                }
                            }
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix >= 0 && ix < w as isize {
                                    *d = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im_add_batch<T: Real>(
    cols: &[T],
    output: &mut [T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) {
    let p = oh * ow;
    let np = n * p;
    for b in 0..n {
        let sample = &mut output[b * c * h * w..(b + 1) * c * h * w];
        let mut row = 0usize;
        for ci in 0..c {
            let plane = &mut sample[ci * h * w..(ci + 1) * h * w];
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let src = &cols[row * np + b * p..row * np + (b + 1) * p];
                    row += 1;
                    for oy in 0..oh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let srow = &src[oy * ow..(oy + 1) * ow];
                        for (ox, &sv) in srow.iter().enumerate() {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix >= 0 && ix < w as isize {
                                dst_row[ix as usize] = dst_row[ix as usize] + sv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Nearest-neighbor 2x spatial upsampling (used by the segmentation
/// decoder). Backward sums each 2x2 output block into its source pixel.
#[derive(Clone, Debug, Default)]
pub struct Upsample2x {
    cached_shape: Option<[usize; 4]>,
}

impl Upsample2x {
    pub fn forward<T: Real>(&mut self, input: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let s = input.shape();
        if s.len() != 4 {
            return Err(Error::Config(format!(
                "upsample2x expects [N,C,H,W], got {s:?}"
            )));
        }
        let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        for plane in 0..n * c {
            let src = &input.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data_mut()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            for y in 0..h {
                for x in 0..w {
                    let v = src[y * w + x];
                    let base = 2 * y * 2 * w + 2 * x;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + 2 * w] = v;
                    dst[base + 2 * w + 1] = v;
                }
            }
        }
        if train {
            self.cached_shape = Some([n, c, h, w]);
        }
        Ok(out)
    }

    pub fn backward<T: Real>(&mut self, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let [n, c, h, w] = self.cached_shape.take().ok_or_else(|| {
            Error::Usage("upsample2x backward called without a cached forward pass".into())
        })?;
        if upstream.shape() != [n, c, 2 * h, 2 * w] {
            return Err(Error::Usage(format!(
                "upsample2x upstream shape {:?} does not match [{n},{c},{},{}]",
                upstream.shape(),
                2 * h,
                2 * w
            )));
        }
        let mut dinput = Tensor::zeros(&[n, c, h, w]);
        for plane in 0..n * c {
            let up = &upstream.data()[plane * 4 * h * w..(plane + 1) * 4 * h * w];
            let dst = &mut dinput.data_mut()[plane * h * w..(plane + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let base = 2 * y * 2 * w + 2 * x;
                    dst[y * w + x] =
                        up[base] + up[base + 1] + up[base + 2 * w] + up[base + 2 * w + 1];
                }
            }
        }
        Ok(dinput)
    }
}
