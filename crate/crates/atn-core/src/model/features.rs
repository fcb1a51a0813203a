//! Frame preparation and window datasets: turn a recorded dataset into
//! per-frame fused channels (crop, predicted segmentation, flow, pad),
//! apply the augmentation plan, and assemble training batches.
//!
//! Channels are stored u8/i8-quantized per frame (a few hundred MB for
//! the flagship dataset); mirrored variants and brightness jitter are
//! materialized per batch from the provenance flags.

use super::config::AtnConfig;
use super::net::AtnModel;
use super::windows::window_indices;
use crate::augment::{augmentation_plan, brightness, BrightnessSpec, CropSpec, Provenance};
use crate::error::{Error, Result};
use crate::image::{FlowField, ImageBuf, SegMap, SEG_CLASS_COUNT};
use crate::metrics::{EpisodeSeries, PredictionSeries};
use crate::rng::Rng;
use crate::sim::dataset::Dataset;
use crate::sim::types::Kinematics;
use crate::vision::flow::{compute_flow, FlowConfig};
use crate::vision::segnet::{infer_segmentation, SegNet};
use crate::tensor::Tensor;

/// Where the flow channel's reference frame comes from.
pub enum FlowSource<'a> {
    /// Camera frame one control step back, recorded during collection.
    PrevImages(&'a [Vec<u8>]),
    /// Cropped flow fields loaded from the dataset's flow cache.
    Precomputed(&'a [FlowField]),
    /// Fall back to the previous dataset record (1/sample_hz apart).
    PreviousRecord,
}

/// One preprocessed frame with quantized fused channels at the padded
/// network resolution.
#[derive(Clone, Debug)]
pub struct StoredFrame {
    /// H*W*3 RGB bytes (padded).
    pub rgb: Vec<u8>,
    /// H*W predicted (or ground-truth) class ids (padded).
    pub seg: Vec<u8>,
    /// H*W normalized flow, value = clamp(u / flow_norm, -1, 1) * 127.
    pub flow_u: Vec<i8>,
    pub flow_v: Vec<i8>,
    pub kinematics: Kinematics,
    pub steering_deg: f32,
    pub speed_mps: f32,
}

#[derive(Clone, Debug)]
pub struct FrameStore {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<StoredFrame>,
    /// (start, count) per episode, indices into `frames`.
    pub episodes: Vec<(usize, usize)>,
    pub hz: f64,
    pub flow_norm: f32,
}

/// Crop, segment, flow, and pad every record of a dataset.
///
/// `segnet` provides the predicted segmentation channel (the deployment
/// path); with `None` the recorded ground-truth maps are stored instead.
/// `flow_source` selects the flow reference frame: the camera frame one
/// control step back (recorded at collection time or loaded from the
/// dataset's flow cache), falling back to the previous dataset record
/// when neither is available.
pub fn build_frame_store(
    dataset: &Dataset,
    segnet: Option<&mut SegNet>,
    crop: &CropSpec,
    flow_config: &FlowConfig,
    target_height: usize,
    flow_norm: f32,
    flow_source: FlowSource<'_>,
) -> Result<FrameStore> {
    crop.validate()?;
    let (h, w) = (dataset.meta.height, dataset.meta.width);
    let top = crop.top_rows(h);
    let crop_h = crop.cropped_height(h);
    if target_height < crop_h {
        return Err(Error::Config(format!(
            "padded height {target_height} below cropped height {crop_h}"
        )));
    }
    if let FlowSource::PrevImages(prev) = &flow_source {
        if prev.len() != dataset.records.len() {
            return Err(Error::Usage(format!(
                "{} previous frames for {} records",
                prev.len(),
                dataset.records.len()
            )));
        }
    }
    if let FlowSource::Precomputed(fields) = &flow_source {
        if fields.len() != dataset.records.len() {
            return Err(Error::Usage(format!(
                "{} cached flow fields for {} records",
                fields.len(),
                dataset.records.len()
            )));
        }
    }
    let mut segnet = segnet;
    let mut frames: Vec<StoredFrame> = Vec::with_capacity(dataset.records.len());
    let mut episodes = Vec::with_capacity(dataset.meta.episodes.len());
    for e in 0..dataset.meta.episodes.len() {
        let range = dataset.episode_indices(e);
        episodes.push((range.start, range.len()));
        let episode_start = range.start;
        let mut prev_cropped: Option<ImageBuf> = None;
        for idx in range {
            let rec = &dataset.records[idx];
            let cropped = rec.image_buf(h, w).crop_rows(top, crop_h)?;
            let seg_cropped = match segnet.as_deref_mut() {
                Some(net) => infer_segmentation(net, &cropped)?,
                None => rec.seg_map(h, w).crop_rows(top, crop_h)?,
            };
            let flow = if idx == episode_start {
                FlowField::zeros(crop_h, w)
            } else {
                match &flow_source {
                    FlowSource::PrevImages(prev) if !prev[idx].is_empty() => {
                        let mut prev_img = ImageBuf::new(h, w);
                        for (dst, &src) in prev_img.data.iter_mut().zip(&prev[idx]) {
                            *dst = src as f32 / 255.0;
                        }
                        let prev_c = prev_img.crop_rows(top, crop_h)?;
                        compute_flow(&prev_c, &cropped, flow_config)?
                    }
                    FlowSource::Precomputed(fields) => {
                        let f = &fields[idx];
                        if f.height != crop_h || f.width != w {
                            return Err(Error::Usage(format!(
                                "cached flow is {}x{}, expected {crop_h}x{w}",
                                f.height, f.width
                            )));
                        }
                        f.clone()
                    }
                    _ => match &prev_cropped {
                        Some(prev) => compute_flow(prev, &cropped, flow_config)?,
                        None => FlowField::zeros(crop_h, w),
                    },
                }
            };
            let padded_rgb = cropped.pad_rows_to(target_height)?;
            let seg_padded = pad_seg_rows(&seg_cropped, target_height);
            let (fu, fv) = pad_and_quantize_flow(&flow, target_height, flow_norm);
            frames.push(StoredFrame {
                rgb: padded_rgb
                    .data
                    .iter()
                    .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect(),
                seg: seg_padded,
                flow_u: fu,
                flow_v: fv,
                kinematics: rec.kinematics,
                steering_deg: rec.steering_deg,
                speed_mps: rec.kinematics.speed_mph / 2.236_936,
            });
            prev_cropped = Some(cropped);
        }
    }
    Ok(FrameStore {
        height: target_height,
        width: w,
        frames,
        episodes,
        hz: dataset.meta.hz,
        flow_norm,
    })
}

fn pad_seg_rows(seg: &SegMap, target_height: usize) -> Vec<u8> {
    let top = (target_height - seg.height) / 2;
    let mut out = vec![0u8; target_height * seg.width];
    for y in 0..target_height {
        let src_y = y.saturating_sub(top).min(seg.height - 1);
        out[y * seg.width..(y + 1) * seg.width]
            .copy_from_slice(&seg.classes[src_y * seg.width..(src_y + 1) * seg.width]);
    }
    out
}

fn pad_and_quantize_flow(flow: &FlowField, target_height: usize, norm: f32) -> (Vec<i8>, Vec<i8>) {
    let top = (target_height - flow.height) / 2;
    let q = |v: f32| ((v / norm).clamp(-1.0, 1.0) * 127.0).round() as i8;
    let mut u = vec![0i8; target_height * flow.width];
    let mut v = vec![0i8; target_height * flow.width];
    for y in 0..target_height {
        let src_y = y.saturating_sub(top).min(flow.height - 1);
        for x in 0..flow.width {
            u[y * flow.width + x] = q(flow.u[src_y * flow.width + x]);
            v[y * flow.width + x] = q(flow.v[src_y * flow.width + x]);
        }
    }
    (u, v)
}

impl FrameStore {
    /// Fused channel tensor [C, H, W] for one stored frame under the
    /// sample's provenance flags, with channels selected by the network
    /// config (order: R, G, B, seg, u, v).
    pub fn features(
        &self,
        index: usize,
        flipped: bool,
        brightness_factor: f32,
        config: &AtnConfig,
    ) -> Result<Tensor<f32>> {
        let f = &self.frames[index];
        let (h, w) = (self.height, self.width);
        let plane = h * w;
        let mut img = ImageBuf::new(h, w);
        for (dst, &src) in img.data.iter_mut().zip(&f.rgb) {
            *dst = src as f32 / 255.0;
        }
        if flipped {
            img = img.flipped_horizontal();
        }
        if (brightness_factor - 1.0).abs() > 1e-6 {
            img = brightness(&img, brightness_factor as f64)?;
        }
        let c = config.channels();
        let mut data = vec![0.0f32; c * plane];
        for i in 0..plane {
            data[i] = img.data[i * 3];
            data[plane + i] = img.data[i * 3 + 1];
            data[2 * plane + i] = img.data[i * 3 + 2];
        }
        let mut ch = 3;
        let col = |x: usize| if flipped { w - 1 - x } else { x };
        if config.enable_segmentation {
            if config.one_hot_seg {
                for y in 0..h {
                    for x in 0..w {
                        let cls = f.seg[y * w + col(x)] as usize;
                        data[(ch + cls.min(SEG_CLASS_COUNT - 1)) * plane + y * w + x] = 1.0;
                    }
                }
                ch += SEG_CLASS_COUNT;
            } else {
                for y in 0..h {
                    for x in 0..w {
                        data[ch * plane + y * w + x] =
                            f.seg[y * w + col(x)] as f32 / (SEG_CLASS_COUNT - 1) as f32;
                    }
                }
                ch += 1;
            }
        }
        if config.enable_flow {
            let sign = if flipped { -1.0f32 } else { 1.0 };
            for y in 0..h {
                for x in 0..w {
                    let src = y * w + col(x);
                    data[ch * plane + y * w + x] = sign * f.flow_u[src] as f32 / 127.0;
                    data[(ch + 1) * plane + y * w + x] = f.flow_v[src] as f32 / 127.0;
                }
            }
        }
        Tensor::from_vec(&[c, h, w], data)
    }

    pub fn kinematics_of(&self, index: usize, flipped: bool) -> Kinematics {
        let k = self.frames[index].kinematics;
        if flipped {
            k.flipped()
        } else {
            k
        }
    }

    pub fn steering_of(&self, index: usize, flipped: bool) -> f32 {
        let s = self.frames[index].steering_deg;
        if flipped {
            -s
        } else {
            s
        }
    }
}

/// One balanced training sample: the window ending at `last_index` under
/// the provenance transform.
#[derive(Clone, Copy, Debug)]
pub struct TrainSample {
    pub last_index: usize,
    pub episode_start: usize,
    pub flipped: bool,
    pub brightness_factor: f32,
}

/// Train/validation split (by episode) plus the balanced training plan.
#[derive(Clone, Debug)]
pub struct WindowDataset {
    pub train_samples: Vec<TrainSample>,
    /// Validation episodes as (start, count), untouched by augmentation.
    pub val_episodes: Vec<(usize, usize)>,
    pub train_episodes: Vec<(usize, usize)>,
    /// The augmentation plan in sidecar form (one line per train sample).
    pub provenance: Vec<Provenance>,
}

pub fn build_window_dataset(
    store: &FrameStore,
    val_fraction: f64,
    flip_augment: bool,
    brightness_spec: BrightnessSpec,
    seed: u64,
) -> Result<WindowDataset> {
    if store.episodes.is_empty() {
        return Err(Error::Usage("frame store has no episodes".into()));
    }
    let mut order: Vec<usize> = (0..store.episodes.len()).collect();
    let mut rng = Rng::derive(seed, "episode-split");
    rng.shuffle(&mut order);
    let val_count = ((store.episodes.len() as f64 * val_fraction).round() as usize)
        .min(store.episodes.len() - 1)
        .max(if store.episodes.len() > 1 { 1 } else { 0 });
    let (val_ids, train_ids) = order.split_at(val_count);
    let mut val_episodes: Vec<(usize, usize)> =
        val_ids.iter().map(|&e| store.episodes[e]).collect();
    let mut train_episodes: Vec<(usize, usize)> =
        train_ids.iter().map(|&e| store.episodes[e]).collect();
    val_episodes.sort_unstable();
    train_episodes.sort_unstable();

    // flatten train records and remember each one's episode start
    let mut record_index = Vec::new();
    let mut episode_start = Vec::new();
    let mut labels = Vec::new();
    for &(start, count) in &train_episodes {
        for idx in start..start + count {
            record_index.push(idx);
            episode_start.push(start);
            labels.push(store.frames[idx].steering_deg);
        }
    }
    let plan = augmentation_plan(&labels, brightness_spec, flip_augment, seed);
    let train_samples = plan
        .iter()
        .map(|p| TrainSample {
            last_index: record_index[p.source_index],
            episode_start: episode_start[p.source_index],
            flipped: p.flipped,
            brightness_factor: p.brightness_factor,
        })
        .collect();
    Ok(WindowDataset {
        train_samples,
        val_episodes,
        train_episodes,
        provenance: plan,
    })
}

/// Assemble a training batch: x is [B*w, C, H, W] with window elements
/// oldest-first batch-major, kinematics normalized per element, targets
/// [B, 1] in degrees.
pub fn assemble_batch(
    store: &FrameStore,
    samples: &[TrainSample],
    config: &AtnConfig,
) -> Result<(Tensor<f32>, Vec<f32>, Tensor<f32>)> {
    let w = config.effective_window();
    let (c, h, wd) = (config.channels(), store.height, store.width);
    let b = samples.len();
    let mut data = Vec::with_capacity(b * w * c * h * wd);
    let mut kin = Vec::with_capacity(b * w * Kinematics::DIM);
    let mut targets = Vec::with_capacity(b);
    for s in samples {
        let t_local = s.last_index - s.episode_start;
        let indices = window_indices(s.episode_start, t_local, w);
        for idx in indices {
            let feat = store.features(idx, s.flipped, s.brightness_factor, config)?;
            data.extend_from_slice(feat.data());
            kin.extend_from_slice(&store.kinematics_of(idx, s.flipped).normalized());
        }
        targets.push(store.steering_of(s.last_index, s.flipped));
    }
    let x = Tensor::from_vec(&[b * w, c, h, wd], data)?;
    let y = Tensor::from_vec(&[b, 1], targets)?;
    Ok((x, kin, y))
}

/// Run the model over whole episodes in order (inference mode) and
/// collect the prediction series for the metrics.
pub fn evaluate_series(
    model: &mut AtnModel,
    store: &FrameStore,
    episodes: &[(usize, usize)],
) -> Result<PredictionSeries> {
    let config = model.config.clone();
    let w = config.effective_window();
    let mut rng = Rng::new(0);
    let mut series = PredictionSeries::default();
    for &(start, count) in episodes {
        let mut ep = EpisodeSeries {
            dt: 1.0 / store.hz,
            ..EpisodeSeries::default()
        };
        let mut t = 0usize;
        while t < count {
            let chunk = (count - t).min(32);
            let samples: Vec<TrainSample> = (t..t + chunk)
                .map(|ti| TrainSample {
                    last_index: start + ti,
                    episode_start: start,
                    flipped: false,
                    brightness_factor: 1.0,
                })
                .collect();
            let (x, kin, _) = assemble_batch(store, &samples, &config)?;
            let preds = model.forward_batch(&x, &kin, false, &mut rng)?;
            for (i, sample) in samples.iter().enumerate() {
                ep.predicted_deg.push(preds.data()[i] as f64);
                ep.ground_truth_deg
                    .push(store.frames[sample.last_index].steering_deg as f64);
                ep.speed_mps
                    .push(store.frames[sample.last_index].speed_mps as f64);
            }
            t += chunk;
        }
        let _ = w;
        series.episodes.push(ep);
    }
    Ok(series)
}
