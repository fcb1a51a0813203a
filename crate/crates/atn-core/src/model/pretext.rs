//! Pretext-task pretraining for transfer: classify procedurally
//! generated scene attributes (upcoming curve direction x theme) from
//! the same fused-channel input the policy network sees, then hand the
//! trained conv stack over as the transfer initialization. The
//! classification head is discarded.

use super::config::AtnConfig;
use super::net::ConvStack;
use crate::augment::CropSpec;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sim::render::{render_frame, RenderConfig};
use crate::sim::track::{generate_track, Theme, TrackSpec};
use crate::sim::types::VehicleState;
use crate::tensor::act::Relu;
use crate::tensor::linear::Linear;
use crate::tensor::loss::softmax_cross_entropy;
use crate::tensor::optim::{adam_step, OptimizerConfig, Parameter};
use crate::tensor::Tensor;
use crate::vision::flow::{compute_flow, FlowConfig};
use crate::vision::segnet::{infer_segmentation, SegNet};
use crate::vision::stack::{pad_tensor_rows, stack_channels};

/// Joint label space: curve direction {left, straight, right} x theme
/// {desert, suburb, mountain}.
pub const PRETEXT_CLASSES: usize = 9;

#[derive(Clone, Debug)]
pub struct PretextConfig {
    pub frames_per_theme: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    /// |curvature| below this is "straight", 1/m.
    pub curve_threshold: f64,
    /// Curve direction is read this far ahead of the camera, meters.
    pub lookahead_m: f64,
    pub tracks_per_theme: usize,
    pub cruise_speed: f64,
    pub seed: u64,
    pub atn: AtnConfig,
    pub crop: CropSpec,
    pub flow: FlowConfig,
    pub render: RenderConfig,
}

impl Default for PretextConfig {
    fn default() -> Self {
        PretextConfig {
            frames_per_theme: 500,
            epochs: 8,
            batch_size: 32,
            learning_rate: 1e-3,
            val_fraction: 0.15,
            curve_threshold: 0.008,
            lookahead_m: 15.0,
            tracks_per_theme: 3,
            cruise_speed: 15.0,
            seed: 11,
            atn: AtnConfig::default(),
            crop: CropSpec {
                top_fraction: 0.25,
                bottom_fraction: 0.125,
            },
            flow: FlowConfig::default(),
            render: RenderConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretextReport {
    pub epoch_losses: Vec<f64>,
    pub heldout_accuracy: f64,
    pub sample_count: usize,
}

fn curve_label(track: &TrackSpec, s: f64, cfg: &PretextConfig) -> usize {
    let k = track.curvature_at(s + cfg.lookahead_m);
    if k < -cfg.curve_threshold {
        0 // left (negative curvature bends left under clockwise headings)
    } else if k > cfg.curve_threshold {
        2 // right
    } else {
        1 // straight
    }
}

fn theme_index(theme: Theme) -> usize {
    match theme {
        Theme::Desert => 0,
        Theme::Suburb => 1,
        Theme::Mountain => 2,
    }
}

/// Generate one pretext sample: render the view at a jittered pose plus
/// the view half a second earlier along the lane, build the fused
/// channels, and label with (curve direction, theme).
fn make_sample(
    track: &TrackSpec,
    segnet: &mut SegNet,
    cfg: &PretextConfig,
    rng: &mut Rng,
) -> Result<(Tensor<f32>, usize)> {
    let s = rng.uniform(0.0, track.total_length);
    let offset = rng.uniform(-1.0, 1.0);
    let herr = rng.uniform(-0.1, 0.1);
    let pose = |s_at: f64| -> VehicleState {
        let (p, h, _) = track.sample(s_at);
        VehicleState::at(
            p[0] + offset * h.sin(),
            p[1] - offset * h.cos(),
            h + herr,
            cfg.cruise_speed,
        )
    };
    let state = pose(s);
    let prev_state = pose(s - cfg.cruise_speed * 0.5);
    let (img, _) = render_frame(track, &state, &cfg.render, s);
    let (prev_img, _) = render_frame(track, &prev_state, &cfg.render, s - cfg.cruise_speed * 0.5);
    let top = cfg.crop.top_rows(img.height);
    let ch = cfg.crop.cropped_height(img.height);
    let cropped = img.crop_rows(top, ch)?;
    let prev_cropped = prev_img.crop_rows(top, ch)?;
    let seg = infer_segmentation(segnet, &cropped)?;
    let flow = compute_flow(&prev_cropped, &cropped, &cfg.flow)?;
    let stacked = stack_channels(&cropped, &seg, &flow, &cfg.atn.stack_config())?;
    let padded = pad_tensor_rows(&stacked, cfg.atn.input_height)?;
    let label = curve_label(track, s, cfg) * 3 + theme_index(track.theme);
    Ok((padded, label))
}

/// Classifier over the shared conv stack.
struct PretextNet {
    stack: ConvStack,
    fc: Linear<f32>,
    relu: Relu<f32>,
    out: Linear<f32>,
}

impl PretextNet {
    fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        let mut out = self.stack.params_mut();
        out.extend(self.fc.params_mut());
        out.extend(self.out.params_mut());
        out
    }
}

/// Train the pretext classifier and return the conv-stack tensors for
/// transfer plus the training report. The head is dropped here.
pub fn pretext_pretrain(
    segnet: &mut SegNet,
    config: &PretextConfig,
) -> Result<(Vec<(String, Tensor<f32>)>, PretextReport)> {
    if config.atn.channels() != 6 {
        return Err(Error::Config(
            "pretext pretraining expects the full 6-channel input".into(),
        ));
    }
    let mut rng = Rng::derive(config.seed, "pretext");
    // samples across all themes and a few tracks per theme
    let mut samples: Vec<(Tensor<f32>, usize)> = Vec::new();
    for theme in Theme::ALL {
        let tracks: Vec<TrackSpec> = (0..config.tracks_per_theme)
            .map(|i| generate_track(4000 + i as u64, theme))
            .collect();
        for i in 0..config.frames_per_theme {
            let track = &tracks[i % tracks.len()];
            samples.push(make_sample(track, segnet, config, &mut rng)?);
        }
    }
    rng.shuffle(&mut samples);
    let val_count = ((samples.len() as f64 * config.val_fraction) as usize).max(1);
    let (val, train) = samples.split_at(val_count);

    let mut net = PretextNet {
        stack: ConvStack::build(&config.atn, &mut rng)?,
        fc: Linear::new("pretext_fc", 0, 0, &mut rng),
        relu: Relu::default(),
        out: Linear::new("pretext_out", 0, 0, &mut rng),
    };
    net.fc = Linear::new("pretext_fc", net.stack.flat_dim, 64, &mut rng);
    net.out = Linear::new("pretext_out", 64, PRETEXT_CLASSES, &mut rng);

    let opt = OptimizerConfig {
        learning_rate: config.learning_rate,
        ..OptimizerConfig::default()
    };
    let shape = [
        config.atn.channels(),
        config.atn.input_height,
        config.atn.input_width,
    ];
    let el = shape[0] * shape[1] * shape[2];
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::new();
    for epoch in 0..config.epochs {
        let mut erng = Rng::derive(config.seed, &format!("pretext-epoch-{epoch}"));
        erng.shuffle(&mut order);
        let mut total = 0.0f64;
        let mut batches = 0.0f64;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue; // batchnorm needs two samples
            }
            let mut data = Vec::with_capacity(chunk.len() * el);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                data.extend_from_slice(train[i].0.data());
                labels.push(train[i].1);
            }
            let x = Tensor::from_vec(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
            let flat = net.stack.forward(&x, true, &mut erng)?;
            let hidden = net.relu.forward(&net.fc.forward(&flat, true)?, true);
            let logits = net.out.forward(&hidden, true)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("pretext training loss".into()));
            }
            let g = net.out.backward(&dlogits)?;
            let g = net.relu.backward(&g)?;
            let g = net.fc.backward(&g)?;
            net.stack.backward(&g)?;
            adam_step(&mut net.params_mut(), &opt, opt.learning_rate)?;
            total += loss;
            batches += 1.0;
        }
        epoch_losses.push(total / batches.max(1.0));
    }

    // held-out accuracy, inference mode
    let mut correct = 0usize;
    let mut irng = Rng::new(0);
    for chunk in val.chunks(64) {
        let mut data = Vec::with_capacity(chunk.len() * el);
        for (t, _) in chunk {
            data.extend_from_slice(t.data());
        }
        let x = Tensor::from_vec(&[chunk.len(), shape[0], shape[1], shape[2]], data)?;
        let flat = net.stack.forward(&x, false, &mut irng)?;
        let hidden = net.relu.forward(&net.fc.forward(&flat, false)?, false);
        let logits = net.out.forward(&hidden, false)?;
        for (row, (_, label)) in chunk.iter().enumerate() {
            let r = &logits.data()[row * PRETEXT_CLASSES..(row + 1) * PRETEXT_CLASSES];
            let pred = r
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == *label {
                correct += 1;
            }
        }
    }
    let report = PretextReport {
        epoch_losses,
        heldout_accuracy: correct as f64 / val.len() as f64,
        sample_count: samples.len(),
    };
    let tensors: Vec<(String, Tensor<f32>)> = net
        .stack
        .params_mut()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    Ok((tensors, report))
}
