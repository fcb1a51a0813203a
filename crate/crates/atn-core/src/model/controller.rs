//! Closed-loop controller: runs the trained network inside the rollout,
//! building each step's fused channels (crop, predicted segmentation,
//! flow against the frame half a second back) and the observation window
//! at the training frame spacing.

use std::collections::VecDeque;

use super::config::AtnConfig;
use super::net::AtnModel;
use crate::augment::CropSpec;
use crate::error::{Error, Result};
use crate::image::{FlowField, ImageBuf, SegMap, SEG_CLASS_COUNT};
use crate::sim::rollout::{Controller, StepContext};
use crate::sim::types::Kinematics;
use crate::tensor::Tensor;
use crate::vision::flow::{compute_flow, FlowConfig};
use crate::vision::segnet::{infer_segmentation, SegNet};

pub struct AtnController {
    model: AtnModel,
    segnet: Option<SegNet>,
    crop: CropSpec,
    flow_config: FlowConfig,
    /// Control steps between window elements (training frames are 1/hz
    /// apart; the control loop runs faster).
    window_stride: usize,
    cropped_history: VecDeque<ImageBuf>,
    feature_history: VecDeque<(Tensor<f32>, Kinematics)>,
}

impl AtnController {
    pub fn new(
        model: AtnModel,
        segnet: Option<SegNet>,
        crop: CropSpec,
        flow_config: FlowConfig,
        window_stride: usize,
    ) -> Result<AtnController> {
        if model.config.enable_segmentation && segnet.is_none() {
            return Err(Error::Config(
                "model consumes a segmentation channel but no segmentation net was given".into(),
            ));
        }
        if window_stride == 0 {
            return Err(Error::Config("window stride must be >= 1".into()));
        }
        Ok(AtnController {
            model,
            segnet,
            crop,
            flow_config,
            window_stride,
            cropped_history: VecDeque::new(),
            feature_history: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &AtnConfig {
        &self.model.config
    }

    /// Fuse one step's channels into the padded [C, H, W] input.
    fn fuse(&self, image: &ImageBuf, seg: &SegMap, flow: &FlowField) -> Result<Tensor<f32>> {
        let config = &self.model.config;
        let target_h = config.input_height;
        let (h, w) = (image.height, image.width);
        let padded = image.pad_rows_to(target_h)?;
        let top = (target_h - h) / 2;
        let c = config.channels();
        let plane = target_h * w;
        let mut data = vec![0.0f32; c * plane];
        for i in 0..plane {
            data[i] = padded.data[i * 3];
            data[plane + i] = padded.data[i * 3 + 1];
            data[2 * plane + i] = padded.data[i * 3 + 2];
        }
        let src_y = |y: usize| y.saturating_sub(top).min(h - 1);
        let mut ch = 3;
        if config.enable_segmentation {
            if config.one_hot_seg {
                for y in 0..target_h {
                    for x in 0..w {
                        let cls = (seg.class(src_y(y), x) as usize).min(SEG_CLASS_COUNT - 1);
                        data[(ch + cls) * plane + y * w + x] = 1.0;
                    }
                }
                ch += SEG_CLASS_COUNT;
            } else {
                for y in 0..target_h {
                    for x in 0..w {
                        data[ch * plane + y * w + x] =
                            seg.class(src_y(y), x) as f32 / (SEG_CLASS_COUNT - 1) as f32;
                    }
                }
                ch += 1;
            }
        }
        if config.enable_flow {
            let norm = 8.0f32;
            for y in 0..target_h {
                for x in 0..w {
                    let src = src_y(y) * w + x;
                    data[ch * plane + y * w + x] = (flow.u[src] / norm).clamp(-1.0, 1.0);
                    data[(ch + 1) * plane + y * w + x] = (flow.v[src] / norm).clamp(-1.0, 1.0);
                }
            }
        }
        Tensor::from_vec(&[c, target_h, w], data)
    }
}

impl Controller for AtnController {
    fn needs_frames(&self) -> bool {
        true
    }

    fn reset(&mut self) {
        self.cropped_history.clear();
        self.feature_history.clear();
    }

    fn act(&mut self, ctx: &StepContext) -> Result<f64> {
        let (image, _gt_seg) = ctx
            .frame
            .ok_or_else(|| Error::Usage("controller needs rendered frames".into()))?;
        let top = self.crop.top_rows(image.height);
        let ch = self.crop.cropped_height(image.height);
        let cropped = image.crop_rows(top, ch)?;
        let seg = match self.segnet.as_mut() {
            Some(net) => infer_segmentation(net, &cropped)?,
            None => SegMap::new(cropped.height, cropped.width),
        };
        // flow against the previous camera frame (one control step back)
        let flow = match self.cropped_history.back() {
            Some(prev) => compute_flow(prev, &cropped, &self.flow_config)?,
            None => FlowField::zeros(cropped.height, cropped.width),
        };
        let feature = self.fuse(&cropped, &seg, &flow)?;
        self.cropped_history.push_back(cropped);
        self.feature_history.push_back((feature, ctx.kinematics));
        let keep = 2 * self.window_stride + 1;
        while self.cropped_history.len() > keep {
            self.cropped_history.pop_front();
        }
        while self.feature_history.len() > keep {
            self.feature_history.pop_front();
        }

        // window elements at the training frame spacing, oldest first
        let w = self.model.config.effective_window();
        let newest = self.feature_history.len() - 1;
        let mut feats = Vec::with_capacity(w);
        let mut kins = Vec::with_capacity(w);
        for i in 0..w {
            let back = (w - 1 - i) * self.window_stride;
            let idx = newest.saturating_sub(back);
            let (f, k) = &self.feature_history[idx];
            feats.push(f.clone());
            kins.push(*k);
        }
        self.model.predict_window(&feats, &kins)
    }
}
