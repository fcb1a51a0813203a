//! Tiny encoder-decoder segmentation network trained on the simulator's
//! ground-truth class maps. One stride-2 stage down, nearest upsample
//! back, per-pixel softmax over the nine classes.

use crate::error::{Error, Result};
use crate::image::{ImageBuf, SegMap, SEG_CLASS_COUNT};
use crate::rng::Rng;
use crate::tensor::act::Relu;
use crate::tensor::conv::{Conv2d, Upsample2x};
use crate::tensor::optim::{adam_step, OptimizerConfig, Parameter};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SegNet {
    conv1: Conv2d<f32>,
    conv2: Conv2d<f32>,
    conv3: Conv2d<f32>,
    conv4: Conv2d<f32>,
    conv5: Conv2d<f32>,
    relu1: Relu<f32>,
    relu2: Relu<f32>,
    relu3: Relu<f32>,
    relu4: Relu<f32>,
    up: Upsample2x,
}

impl SegNet {
    pub fn new(rng: &mut Rng) -> Self {
        SegNet {
            conv1: Conv2d::new("seg.conv1", 3, 12, 3, 1, 1, rng),
            conv2: Conv2d::new("seg.conv2", 12, 24, 3, 2, 1, rng),
            conv3: Conv2d::new("seg.conv3", 24, 24, 3, 1, 1, rng),
            conv4: Conv2d::new("seg.conv4", 24, 12, 3, 1, 1, rng),
            conv5: Conv2d::new("seg.conv5", 12, SEG_CLASS_COUNT, 1, 1, 0, rng),
            relu1: Relu::default(),
            relu2: Relu::default(),
            relu3: Relu::default(),
            relu4: Relu::default(),
            up: Upsample2x::default(),
        }
    }

    /// Class logits [N, 9, H, W]; H and W must be even (one down/up
    /// stage).
    pub fn forward(&mut self, x: &Tensor<f32>, train: bool) -> Result<Tensor<f32>> {
        let s = x.shape();
        if s.len() != 4 || s[2] % 2 != 0 || s[3] % 2 != 0 {
            return Err(Error::Config(format!(
                "segnet needs [N,3,H,W] with even H,W, got {s:?}"
            )));
        }
        let h1 = self.relu1.forward(&self.conv1.forward(x, train)?, train);
        let h2 = self.relu2.forward(&self.conv2.forward(&h1, train)?, train);
        let h3 = self.relu3.forward(&self.conv3.forward(&h2, train)?, train);
        let h3u = self.up.forward(&h3, train)?;
        let h4 = self.relu4.forward(&self.conv4.forward(&h3u, train)?, train);
        self.conv5.forward(&h4, train)
    }

    fn backward(&mut self, dlogits: &Tensor<f32>) -> Result<()> {
        let g = self.conv5.backward(dlogits)?;
        let g = self.relu4.backward(&g)?;
        let g = self.conv4.backward(&g)?;
        let g = self.up.backward(&g)?;
        let g = self.relu3.backward(&g)?;
        let g = self.conv3.backward(&g)?;
        let g = self.relu2.backward(&g)?;
        let g = self.conv2.backward(&g)?;
        let g = self.relu1.backward(&g)?;
        self.conv1.backward(&g)?;
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        let mut out: Vec<&mut Parameter<f32>> = Vec::new();
        out.extend(self.conv1.params_mut());
        out.extend(self.conv2.params_mut());
        out.extend(self.conv3.params_mut());
        out.extend(self.conv4.params_mut());
        out.extend(self.conv5.params_mut());
        out
    }

    /// Named tensors for checkpointing.
    pub fn named_values(&mut self) -> Vec<(String, Tensor<f32>)> {
        self.params_mut()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// Architecture fingerprint for checkpoint validation.
    pub fn fingerprint() -> u64 {
        crate::rng::fnv1a64(b"segnet-v1 3-12-24-24-12-9")
    }

    pub fn save(&mut self, path: &std::path::Path, seed: u64) -> Result<()> {
        let named = self.named_values();
        let refs: Vec<(String, &Tensor<f32>)> =
            named.iter().map(|(n, t)| (n.clone(), t)).collect();
        crate::checkpoint::save_checkpoint(path, Self::fingerprint(), seed, &[], &refs)
    }

    pub fn load(path: &std::path::Path) -> Result<SegNet> {
        let ck: crate::checkpoint::Checkpoint<f32> =
            crate::checkpoint::load_checkpoint(path, Some(Self::fingerprint()))?;
        let mut net = SegNet::new(&mut Rng::new(0));
        net.load_values(&ck.tensors)?;
        Ok(net)
    }

    pub fn load_values(&mut self, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
        for p in self.params_mut() {
            let found = tensors
                .iter()
                .find(|(n, _)| n == &p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {}", p.name)))?;
            if found.1.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {} has shape {:?}, model wants {:?}",
                    p.name,
                    found.1.shape(),
                    p.value.shape()
                )));
            }
            p.value = found.1.clone();
        }
        Ok(())
    }
}

/// Convert an image to a [1, 3, H, W] tensor (channel planes).
pub fn image_to_tensor(img: &ImageBuf) -> Tensor<f32> {
    let (h, w) = (img.height, img.width);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        for x in 0..w {
            let px = img.pixel(y, x);
            for c in 0..3 {
                data[c * h * w + y * w + x] = px[c];
            }
        }
    }
    Tensor::from_vec(&[1, 3, h, w], data).expect("shape math")
}

fn batch_to_tensor(images: &[&ImageBuf]) -> Tensor<f32> {
    let (h, w) = (images[0].height, images[0].width);
    let mut data = vec![0.0f32; images.len() * 3 * h * w];
    for (b, img) in images.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let px = img.pixel(y, x);
                for c in 0..3 {
                    data[((b * 3 + c) * h + y) * w + x] = px[c];
                }
            }
        }
    }
    Tensor::from_vec(&[images.len(), 3, h, w], data).expect("shape math")
}

/// Per-pixel softmax cross-entropy on [N, K, H, W] logits against u8
/// labels in row-major [N, H, W] order. Returns (mean loss, dlogits).
fn pixel_cross_entropy(logits: &Tensor<f32>, labels: &[u8]) -> Result<(f64, Tensor<f32>)> {
    let s = logits.shape();
    let (n, k, h, w) = (s[0], s[1], s[2], s[3]);
    if labels.len() != n * h * w {
        return Err(Error::Usage(format!(
            "{} labels for {} pixels",
            labels.len(),
            n * h * w
        )));
    }
    let plane = h * w;
    let mut grad = Tensor::zeros(s);
    let mut loss = 0.0f64;
    let count = (n * plane) as f64;
    for b in 0..n {
        for p in 0..plane {
            let label = labels[b * plane + p] as usize;
            if label >= k {
                return Err(Error::Usage(format!("label {label} out of range")));
            }
            let mut maxv = f32::NEG_INFINITY;
            for c in 0..k {
                maxv = maxv.max(logits.data()[(b * k + c) * plane + p]);
            }
            let mut denom = 0.0f64;
            for c in 0..k {
                denom += ((logits.data()[(b * k + c) * plane + p] - maxv) as f64).exp();
            }
            let logp =
                (logits.data()[(b * k + label) * plane + p] - maxv) as f64 - denom.ln();
            loss -= logp;
            for c in 0..k {
                let pr = ((logits.data()[(b * k + c) * plane + p] - maxv) as f64).exp() / denom;
                let ind = if c == label { 1.0 } else { 0.0 };
                grad.data_mut()[(b * k + c) * plane + p] = ((pr - ind) / count) as f32;
            }
        }
    }
    Ok((loss / count, grad))
}

#[derive(Clone, Debug)]
pub struct SegTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Minimum labeled frames required.
    pub min_frames: usize,
    /// Fraction of frames held out to measure pixel accuracy.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SegTrainConfig {
    fn default() -> Self {
        SegTrainConfig {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-2,
            min_frames: 200,
            val_fraction: 0.15,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SegTrainReport {
    pub epoch_losses: Vec<f64>,
    pub val_pixel_accuracy: f64,
    /// Classes absent from the training labels (still in the output
    /// space).
    pub missing_classes: Vec<u8>,
}

/// Train the segmentation net on (image, ground-truth map) pairs.
pub fn train_segmentation(
    frames: &[(ImageBuf, SegMap)],
    config: &SegTrainConfig,
) -> Result<(SegNet, SegTrainReport)> {
    if frames.len() < config.min_frames {
        return Err(Error::Config(format!(
            "segmentation training needs at least {} labeled frames, got {}",
            config.min_frames,
            frames.len()
        )));
    }
    let mut seen = [false; SEG_CLASS_COUNT];
    for (_, seg) in frames {
        for &c in &seg.classes {
            if (c as usize) < SEG_CLASS_COUNT {
                seen[c as usize] = true;
            }
        }
    }
    let missing_classes: Vec<u8> = (0..SEG_CLASS_COUNT as u8)
        .filter(|&c| !seen[c as usize])
        .collect();
    if !missing_classes.is_empty() {
        eprintln!(
            "warning: classes {missing_classes:?} absent from segmentation training labels"
        );
    }

    let mut rng = Rng::derive(config.seed, "segnet");
    let mut net = SegNet::new(&mut rng);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    rng.shuffle(&mut order);
    let val_count = ((frames.len() as f64 * config.val_fraction) as usize).max(1);
    let (val_idx, train_idx) = order.split_at(val_count);

    let opt = OptimizerConfig {
        learning_rate: config.learning_rate,
        ..OptimizerConfig::default()
    };
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut train_order = train_idx.to_vec();
    for _epoch in 0..config.epochs {
        rng.shuffle(&mut train_order);
        let mut total = 0.0f64;
        let mut batches = 0.0f64;
        for chunk in train_order.chunks(config.batch_size) {
            let images: Vec<&ImageBuf> = chunk.iter().map(|&i| &frames[i].0).collect();
            let mut labels = Vec::new();
            for &i in chunk {
                labels.extend_from_slice(&frames[i].1.classes);
            }
            let x = batch_to_tensor(&images);
            let logits = net.forward(&x, true)?;
            let (loss, dlogits) = pixel_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("segnet training loss".into()));
            }
            net.backward(&dlogits)?;
            adam_step(&mut net.params_mut(), &opt, opt.learning_rate)?;
            total += loss;
            batches += 1.0;
        }
        epoch_losses.push(total / batches.max(1.0));
    }

    let mut correct = 0usize;
    let mut total_px = 0usize;
    for &i in val_idx {
        let pred = infer_segmentation(&mut net, &frames[i].0)?;
        for (p, t) in pred.classes.iter().zip(&frames[i].1.classes) {
            if p == t {
                correct += 1;
            }
            total_px += 1;
        }
    }
    let report = SegTrainReport {
        epoch_losses,
        val_pixel_accuracy: correct as f64 / total_px.max(1) as f64,
        missing_classes,
    };
    Ok((net, report))
}

/// Argmax class map for one image; deterministic.
pub fn infer_segmentation(net: &mut SegNet, image: &ImageBuf) -> Result<SegMap> {
    let x = image_to_tensor(image);
    let logits = net.forward(&x, false)?;
    let s = logits.shape();
    let (k, h, w) = (s[1], s[2], s[3]);
    let plane = h * w;
    let mut out = SegMap::new(h, w);
    for p in 0..plane {
        let mut best = 0u8;
        let mut best_v = f32::NEG_INFINITY;
        for c in 0..k {
            let v = logits.data()[c * plane + p];
            if v > best_v {
                best_v = v;
                best = c as u8;
            }
        }
        out.classes[p] = best;
    }
    Ok(out)
}
