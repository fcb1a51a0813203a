//! The steering network: conv backbone (conv -> batchnorm -> dropout ->
//! ReLU per stage), flattening, kinematics concatenation, a windowed
//! LSTM (or identity), and the fully connected head ending in
//! scale * tanh.

use std::path::Path;

use super::config::{AtnConfig, Backbone};
use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sim::types::Kinematics;
use crate::tensor::act::{Dropout, Relu, Tanh};
use crate::tensor::conv::Conv2d;
use crate::tensor::linear::Linear;
use crate::tensor::lstm::LstmCell;
use crate::tensor::norm::{BatchNorm, Mode};
use crate::tensor::optim::Parameter;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
struct ConvBlock {
    conv: Conv2d<f32>,
    bn: BatchNorm<f32>,
    dropout: Dropout<f32>,
    relu: Relu<f32>,
}

/// The shared convolutional feature extractor: conv -> batchnorm ->
/// dropout -> ReLU per stage, built from the architecture config. The
/// pretext classifier uses the same stack (identical shapes and names),
/// which is what makes its checkpoints transferable.
#[derive(Clone, Debug)]
pub struct ConvStack {
    blocks: Vec<ConvBlock>,
    pub flat_dim: usize,
    out_hw: (usize, usize),
}

impl ConvStack {
    pub fn build(config: &AtnConfig, rng: &mut Rng) -> Result<ConvStack> {
        let mut blocks = Vec::new();
        let mut channels = config.channels();
        let mut shape = vec![1usize, channels, config.input_height, config.input_width];
        for (i, &depth) in config.conv_depths.iter().enumerate() {
            let conv = Conv2d::new(
                &format!("conv{}", i + 1),
                channels,
                depth,
                config.kernel_sizes[i],
                config.strides[i],
                config.paddings[i],
                rng,
            );
            shape = conv.output_shape(&shape)?.to_vec();
            blocks.push(ConvBlock {
                conv,
                bn: BatchNorm::new(&format!("bn{}", i + 1), depth),
                dropout: Dropout::new(config.conv_dropout)?,
                relu: Relu::default(),
            });
            channels = depth;
        }
        Ok(ConvStack {
            blocks,
            flat_dim: shape[1] * shape[2] * shape[3],
            out_hw: (shape[2], shape[3]),
        })
    }

    /// Flattened features [rows, flat_dim].
    pub fn forward(&mut self, x: &Tensor<f32>, train: bool, rng: &mut Rng) -> Result<Tensor<f32>> {
        let rows = x.shape()[0];
        let mut h = x.clone();
        for (i, block) in self.blocks.iter_mut().enumerate() {
            let c = block.conv.forward(&h, train)?;
            let mode = if train { Mode::Train } else { Mode::Infer };
            let b = block.bn.forward(&c, mode)?;
            let d = block.dropout.forward(&b, train, rng);
            h = block.relu.forward(&d, train);
            h.ensure_finite(&format!("conv block {} output", i + 1))?;
        }
        h.reshaped(&[rows, self.flat_dim])
    }

    /// Backward from d(flattened features).
    pub fn backward(&mut self, dflat: &Tensor<f32>) -> Result<()> {
        let rows = dflat.shape()[0];
        let out_c = self.blocks.last().unwrap().conv.out_channels();
        let (oh, ow) = self.out_hw;
        let mut g = dflat.clone().reshaped(&[rows, out_c, oh, ow])?;
        for block in self.blocks.iter_mut().rev() {
            let gr = block.relu.backward(&g)?;
            let gd = block.dropout.backward(&gr)?;
            let gb = block.bn.backward(&gd)?;
            g = block.conv.backward(&gb)?;
        }
        Ok(())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        let mut out: Vec<&mut Parameter<f32>> = Vec::new();
        for block in self.blocks.iter_mut() {
            out.extend(block.conv.params_mut());
            out.extend(block.bn.params_mut());
        }
        out
    }

    pub fn named_stats(&self) -> Vec<(String, Tensor<f32>)> {
        let mut out = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            out.push((format!("bn{}.running_mean", i + 1), block.bn.running_mean.clone()));
            out.push((format!("bn{}.running_var", i + 1), block.bn.running_var.clone()));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

#[derive(Clone, Debug)]
struct FcStage {
    linear: Linear<f32>,
    relu: Relu<f32>,
    dropout: Dropout<f32>,
}

#[derive(Clone, Debug)]
pub struct AtnModel {
    pub config: AtnConfig,
    stack: ConvStack,
    lstm: Option<LstmCell<f32>>,
    stages: Vec<FcStage>,
    out: Linear<f32>,
    out_tanh: Tanh<f32>,
    pub flat_dim: usize,
    pub context_dim: usize,
    last_forward: Option<(usize, usize)>,
}

impl AtnModel {
    /// Build the network for `config`; reports layer shapes are derived
    /// by dry-running the conv chain on the configured input size.
    pub fn build(config: &AtnConfig, rng: &mut Rng) -> Result<AtnModel> {
        config.validate()?;
        let stack = ConvStack::build(config, rng)?;
        let flat_dim = stack.flat_dim;
        let context_dim = flat_dim + if config.enable_kinematics { Kinematics::DIM } else { 0 };
        let lstm = if config.enable_lstm {
            Some(LstmCell::new("lstm", context_dim, config.lstm_width, rng))
        } else {
            None
        };
        let mut head_in = if config.enable_lstm {
            config.lstm_width
        } else {
            context_dim
        };
        let mut stages = Vec::new();
        for (i, &width) in config.fc_widths.iter().enumerate() {
            stages.push(FcStage {
                linear: Linear::new(&format!("fc{}", i + 1), head_in, width, rng),
                relu: Relu::default(),
                dropout: Dropout::new(config.fc_dropout)?,
            });
            head_in = width;
        }
        let out = Linear::new("out", head_in, 1, rng);
        Ok(AtnModel {
            config: config.clone(),
            stack,
            lstm,
            stages,
            out,
            out_tanh: Tanh::default(),
            flat_dim,
            context_dim,
            last_forward: None,
        })
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }

    /// Forward over a prepared batch: `x` is [B*w, C, H, W] (window
    /// elements oldest-first, batch-major), `kin` holds B*w normalized
    /// kinematics rows. Returns predictions [B, 1] in degrees.
    pub fn forward_batch(
        &mut self,
        x: &Tensor<f32>,
        kin: &[f32],
        train: bool,
        rng: &mut Rng,
    ) -> Result<Tensor<f32>> {
        let w = self.config.effective_window();
        let rows = x.shape()[0];
        if rows % w != 0 {
            return Err(Error::Usage(format!(
                "batch rows {rows} not a multiple of window {w}"
            )));
        }
        let batch = rows / w;
        if self.config.enable_kinematics && kin.len() != rows * Kinematics::DIM {
            return Err(Error::Usage(format!(
                "kinematics length {} does not match {rows} rows",
                kin.len()
            )));
        }
        // backbone over all window elements at once
        let flat = self.stack.forward(x, train, rng)?;

        // context features: flattened CNN output ++ kinematics
        let ctx = if self.config.enable_kinematics {
            let mut data = vec![0.0f32; rows * self.context_dim];
            for r in 0..rows {
                let dst = &mut data[r * self.context_dim..];
                dst[..self.flat_dim]
                    .copy_from_slice(&flat.data()[r * self.flat_dim..(r + 1) * self.flat_dim]);
                dst[self.flat_dim..self.context_dim]
                    .copy_from_slice(&kin[r * Kinematics::DIM..(r + 1) * Kinematics::DIM]);
            }
            Tensor::from_vec(&[rows, self.context_dim], data)?
        } else {
            flat
        };

        // temporal fusion
        let head_in = if let Some(lstm) = self.lstm.as_mut() {
            let (mut hs, mut cs) = lstm.zero_state(batch);
            for t in 0..w {
                let mut step = vec![0.0f32; batch * self.context_dim];
                for b in 0..batch {
                    let src = (b * w + t) * self.context_dim;
                    step[b * self.context_dim..(b + 1) * self.context_dim]
                        .copy_from_slice(&ctx.data()[src..src + self.context_dim]);
                }
                let xt = Tensor::from_vec(&[batch, self.context_dim], step)?;
                let (h2, c2) = lstm.step(&xt, &hs, &cs, train)?;
                hs = h2;
                cs = c2;
            }
            hs.ensure_finite("lstm hidden state")?;
            hs
        } else {
            ctx
        };

        // fully connected head
        let mut f = head_in;
        for stage in self.stages.iter_mut() {
            let l = stage.linear.forward(&f, train)?;
            let r = stage.relu.forward(&l, train);
            f = stage.dropout.forward(&r, train, rng);
        }
        let z = self.out.forward(&f, train)?;
        let activated = self.out_tanh.forward(&z, train);
        let scale = self.config.output_scale_deg as f32;
        let preds = activated.map(|v| v * scale);
        preds.ensure_finite("steering prediction")?;
        if train {
            self.last_forward = Some((batch, w));
        }
        Ok(preds)
    }

    /// Backward from dL/dpred [B, 1]; accumulates parameter gradients.
    pub fn backward(&mut self, dpreds: &Tensor<f32>) -> Result<()> {
        let (batch, w) = self.last_forward.take().ok_or_else(|| {
            Error::Usage("model backward called without a cached training forward".into())
        })?;
        let scale = self.config.output_scale_deg as f32;
        let dz_in = dpreds.map(|v| v * scale);
        let dz = self.out_tanh.backward(&dz_in)?;
        let mut g = self.out.backward(&dz)?;
        for stage in self.stages.iter_mut().rev() {
            let gd = stage.dropout.backward(&g)?;
            let gr = stage.relu.backward(&gd)?;
            g = stage.linear.backward(&gr)?;
        }

        let rows = batch * w;
        let dctx = if let Some(lstm) = self.lstm.as_mut() {
            let mut dctx = vec![0.0f32; rows * self.context_dim];
            let mut dh = g;
            let mut dc = Tensor::zeros(&[batch, self.config.lstm_width]);
            for t in (0..w).rev() {
                let (dx, dh_prev, dc_prev) = lstm.backward_step(&dh, &dc)?;
                for b in 0..batch {
                    let dst = (b * w + t) * self.context_dim;
                    dctx[dst..dst + self.context_dim]
                        .copy_from_slice(&dx.data()[b * self.context_dim..(b + 1) * self.context_dim]);
                }
                dh = dh_prev;
                dc = dc_prev;
            }
            dctx
        } else {
            g.into_data()
        };

        // kinematics are inputs; only the CNN slice propagates further
        let mut dflat = vec![0.0f32; rows * self.flat_dim];
        for r in 0..rows {
            dflat[r * self.flat_dim..(r + 1) * self.flat_dim]
                .copy_from_slice(&dctx[r * self.context_dim..r * self.context_dim + self.flat_dim]);
        }
        let dflat = Tensor::from_vec(&[rows, self.flat_dim], dflat)?;
        self.stack.backward(&dflat)
    }

    /// Single-window inference: `features` are the w per-frame channel
    /// tensors [C, H, W] (oldest first), `kins` the matching kinematics.
    pub fn predict_window(
        &mut self,
        features: &[Tensor<f32>],
        kins: &[Kinematics],
    ) -> Result<f64> {
        let w = self.config.effective_window();
        if features.len() != w || kins.len() != w {
            return Err(Error::Usage(format!(
                "window needs exactly {w} elements, got {} features / {} kinematics",
                features.len(),
                kins.len()
            )));
        }
        let (c, h, wd) = (
            self.config.channels(),
            self.config.input_height,
            self.config.input_width,
        );
        let mut data = Vec::with_capacity(w * c * h * wd);
        for f in features {
            if f.shape() != [c, h, wd] {
                return Err(Error::Usage(format!(
                    "feature shape {:?} does not match [{c},{h},{wd}]",
                    f.shape()
                )));
            }
            data.extend_from_slice(f.data());
        }
        let x = Tensor::from_vec(&[w, c, h, wd], data)?;
        let mut kin = Vec::with_capacity(w * Kinematics::DIM);
        for k in kins {
            kin.extend_from_slice(&k.normalized());
        }
        let mut rng = Rng::new(0); // unused in inference mode
        let preds = self.forward_batch(&x, &kin, false, &mut rng)?;
        Ok(preds.data()[0] as f64)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<f32>> {
        let mut out: Vec<&mut Parameter<f32>> = self.stack.params_mut();
        if let Some(lstm) = self.lstm.as_mut() {
            out.extend(lstm.params_mut());
        }
        for stage in self.stages.iter_mut() {
            out.extend(stage.linear.params_mut());
        }
        out.extend(self.out.params_mut());
        out
    }

    /// Batch-norm running statistics, named for checkpointing.
    fn named_stats(&mut self) -> Vec<(String, Tensor<f32>)> {
        self.stack.named_stats()
    }

    /// Conv-stack parameter names eligible for pretext transfer.
    pub fn backbone_tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 1..=self.stack.len() {
            names.push(format!("conv{i}.weight"));
            names.push(format!("conv{i}.bias"));
            names.push(format!("bn{i}.gamma"));
            names.push(format!("bn{i}.beta"));
        }
        names
    }

    /// Initialize the conv stack from pretext-task tensors (shapes must
    /// match exactly); everything else keeps its fresh initialization.
    pub fn load_backbone(&mut self, tensors: &[(String, Tensor<f32>)]) -> Result<()> {
        let names = self.backbone_tensor_names();
        for name in &names {
            let found = tensors
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| Error::Format(format!("pretext checkpoint missing {name}")))?;
            let p = self
                .params_mut()
                .into_iter()
                .find(|p| &p.name == name)
                .expect("backbone names enumerate existing params");
            if p.value.shape() != found.1.shape() {
                return Err(Error::Config(format!(
                    "pretext tensor {name} has shape {:?}, model wants {:?}",
                    found.1.shape(),
                    p.value.shape()
                )));
            }
            p.value = found.1.clone();
        }
        Ok(())
    }

    pub fn save(&mut self, path: &Path, seed: u64, meta: &[(String, String)]) -> Result<()> {
        let fingerprint = self.config.fingerprint();
        let mut all_meta = vec![(
            "atn_config".to_string(),
            self.config.to_text().replace('\n', ";"),
        )];
        all_meta.extend(meta.iter().cloned());
        let mut tensors: Vec<(String, Tensor<f32>)> = Vec::new();
        for p in self.params_mut() {
            tensors.push((p.name.clone(), p.value.clone()));
            tensors.push((format!("{}.m", p.name), p.first_moment.clone()));
            tensors.push((format!("{}.v", p.name), p.second_moment.clone()));
        }
        tensors.extend(self.named_stats());
        let refs: Vec<(String, &Tensor<f32>)> =
            tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
        save_checkpoint(path, fingerprint, seed, &all_meta, &refs)
    }

    /// Load a checkpoint saved by [`AtnModel::save`]; the architecture
    /// fingerprint must match the file's.
    pub fn load(path: &Path, rng: &mut Rng) -> Result<(AtnModel, Checkpoint<f32>)> {
        let ck: Checkpoint<f32> = load_checkpoint(path, None)?;
        let config_text = ck
            .meta_value("atn_config")
            .ok_or_else(|| Error::Format("checkpoint missing atn_config meta".into()))?
            .replace(';', "\n");
        let config = AtnConfig::parse_text(&config_text)?;
        if config.fingerprint() != ck.config_hash {
            return Err(Error::Config(format!(
                "checkpoint config hash {:016x} does not match its own config text {:016x}",
                ck.config_hash,
                config.fingerprint()
            )));
        }
        let mut model = AtnModel::build(&config, rng)?;
        let adam_steps: u64 = ck
            .meta_value("adam_steps")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        for p in model.params_mut() {
            let value = ck
                .tensor(&p.name)
                .ok_or_else(|| Error::Format(format!("checkpoint missing tensor {}", p.name)))?;
            if value.shape() != p.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint tensor {} has shape {:?}, model wants {:?}",
                    p.name,
                    value.shape(),
                    p.value.shape()
                )));
            }
            p.value = value.clone();
            if let Some(m) = ck.tensor(&format!("{}.m", p.name)) {
                p.first_moment = m.clone();
            }
            if let Some(v) = ck.tensor(&format!("{}.v", p.name)) {
                p.second_moment = v.clone();
            }
            p.step_count = adam_steps;
        }
        for (i, block) in model.stack.blocks.iter_mut().enumerate() {
            if let Some(m) = ck.tensor(&format!("bn{}.running_mean", i + 1)) {
                block.bn.running_mean = m.clone();
            }
            if let Some(v) = ck.tensor(&format!("bn{}.running_var", i + 1)) {
                block.bn.running_var = v.clone();
            }
        }
        Ok((model, ck))
    }

    pub fn is_transfer_initialized(&self) -> bool {
        self.config.backbone == Backbone::PretextTransfer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::Variant;

    fn zero_params(model: &mut AtnModel) {
        for p in model.params_mut() {
            let shape = p.value.shape().to_vec();
            p.value = Tensor::zeros(&shape);
        }
    }

    fn random_window(model: &AtnModel, seed: u64) -> (Vec<Tensor<f32>>, Vec<Kinematics>) {
        let mut rng = Rng::new(seed);
        let w = model.config.effective_window();
        let shape = [
            model.config.channels(),
            model.config.input_height,
            model.config.input_width,
        ];
        let feats = (0..w)
            .map(|_| Tensor::uniform(&shape, 0.5, &mut rng))
            .collect();
        let kins = vec![
            Kinematics {
                acceleration: 0.5,
                speed_mph: 33.0,
                heading_deg: 2.0,
                distance_to_curb: 0.2,
                previous_steering_deg: 1.0,
            };
            w
        ];
        (feats, kins)
    }

    #[test]
    fn full_network_emits_one_bounded_scalar() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(1);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let (feats, kins) = random_window(&model, 2);
        let deg = model.predict_window(&feats, &kins).unwrap();
        assert!(deg.abs() <= 90.0, "output {deg}");
    }

    #[test]
    fn all_zero_parameters_predict_zero() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(1);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        zero_params(&mut model);
        let (feats, kins) = random_window(&model, 3);
        let deg = model.predict_window(&feats, &kins).unwrap();
        assert_eq!(deg, 0.0);
    }

    #[test]
    fn output_stays_bounded_under_extreme_inputs() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(4);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let w = cfg.effective_window();
        let shape = [cfg.channels(), cfg.input_height, cfg.input_width];
        let feats: Vec<Tensor<f32>> = (0..w).map(|_| Tensor::full(&shape, 50.0)).collect();
        let kins = vec![Kinematics::zeros(); w];
        let deg = model.predict_window(&feats, &kins).unwrap();
        assert!(deg.abs() <= 90.0);
    }

    #[test]
    fn oldest_window_frame_influences_the_prediction() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(5);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let (mut feats, kins) = random_window(&model, 6);
        let base = model.predict_window(&feats, &kins).unwrap();
        // perturb the oldest frame only
        feats[0] = feats[0].map(|v| v + 0.25);
        let perturbed = model.predict_window(&feats, &kins).unwrap();
        assert!(
            (base - perturbed).abs() > 1e-7,
            "prediction ignored frame t-2: {base} vs {perturbed}"
        );
    }

    #[test]
    fn variant_parameter_counts_are_all_below_the_full_network() {
        let mut rng = Rng::new(7);
        let mut full = AtnModel::build(&AtnConfig::for_variant(Variant::Full), &mut rng).unwrap();
        let full_count = full.param_count();
        for v in [
            Variant::BaselineCnn,
            Variant::WithoutSegmentation,
            Variant::WithoutLstm,
            Variant::WithoutFlow,
            Variant::WithoutKinematics,
        ] {
            let mut m = AtnModel::build(&AtnConfig::for_variant(v), &mut rng).unwrap();
            assert!(
                m.param_count() < full_count,
                "{}: {} !< {}",
                v.name(),
                m.param_count(),
                full_count
            );
        }
        // transfer variant has identical shapes, hence an identical count
        let mut t =
            AtnModel::build(&AtnConfig::for_variant(Variant::PretextTransfer), &mut rng).unwrap();
        assert_eq!(t.param_count(), full_count);
    }

    #[test]
    fn batch_doubling_keeps_per_sample_outputs() {
        let cfg = AtnConfig::for_variant(Variant::WithoutLstm);
        let mut rng = Rng::new(9);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let c = cfg.channels();
        let x1 = Tensor::uniform(&[1, c, 48, 64], 0.5, &mut Rng::new(1));
        let kin: Vec<f32> = Kinematics::zeros().normalized().to_vec();
        let p1 = model
            .forward_batch(&x1, &kin, false, &mut Rng::new(0))
            .unwrap();
        let mut data = x1.data().to_vec();
        data.extend_from_slice(x1.data());
        let x2 = Tensor::from_vec(&[2, c, 48, 64], data).unwrap();
        let mut kin2 = kin.clone();
        kin2.extend_from_slice(&kin);
        let p2 = model
            .forward_batch(&x2, &kin2, false, &mut Rng::new(0))
            .unwrap();
        assert_eq!(p2.shape(), &[2, 1]);
        assert_eq!(p1.data()[0], p2.data()[0]);
        assert_eq!(p1.data()[0], p2.data()[1]);
    }

    #[test]
    fn gradients_reach_the_first_conv_layer() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(11);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let w = cfg.effective_window();
        let c = cfg.channels();
        let x = Tensor::uniform(&[2 * w, c, 48, 64], 0.5, &mut rng);
        let kin = vec![0.1f32; 2 * w * 5];
        let mut drop_rng = Rng::new(77);
        let preds = model.forward_batch(&x, &kin, true, &mut drop_rng).unwrap();
        let target = Tensor::full(preds.shape(), 10.0);
        let (_, grad) = crate::tensor::loss::mse_loss(&preds, &target).unwrap();
        model.backward(&grad).unwrap();
        let first = &mut model.stack.blocks[0].conv.weight;
        let nonzero = first
            .value
            .grad()
            .unwrap()
            .iter()
            .filter(|&&g| g != 0.0)
            .count();
        assert!(nonzero > 0, "first conv layer received no gradient");
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let cfg = AtnConfig::default();
        let mut rng = Rng::new(13);
        let mut model = AtnModel::build(&cfg, &mut rng).unwrap();
        let (feats, kins) = random_window(&model, 14);
        let before = model.predict_window(&feats, &kins).unwrap();
        let path = std::env::temp_dir().join("atn-model-roundtrip.ckpt");
        model
            .save(&path, 42, &[("epoch".into(), "5".into())])
            .unwrap();
        let (mut loaded, ck) = AtnModel::load(&path, &mut Rng::new(999)).unwrap();
        assert_eq!(ck.meta_value("epoch"), Some("5"));
        let after = loaded.predict_window(&feats, &kins).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn transfer_differs_from_scratch_only_in_conv_values() {
        let mut rng_a = Rng::new(21);
        let cfg = AtnConfig::default();
        let mut scratch = AtnModel::build(&cfg, &mut rng_a).unwrap();
        // a fake pretext checkpoint: same shapes, different values
        let donor_cfg = AtnConfig::default();
        let mut donor = AtnModel::build(&donor_cfg, &mut Rng::new(500)).unwrap();
        let tensors: Vec<(String, Tensor<f32>)> = donor
            .params_mut()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect();
        let mut transfer = AtnModel::build(&cfg, &mut Rng::new(21)).unwrap();
        transfer.load_backbone(&tensors).unwrap();
        // shapes all agree
        assert_eq!(scratch.param_count(), transfer.param_count());
        // conv names differ in value, non-backbone names are identical
        let names = scratch.backbone_tensor_names();
        for (a, b) in scratch
            .params_mut()
            .into_iter()
            .zip(transfer.params_mut().into_iter())
        {
            assert_eq!(a.name, b.name);
            // conv weights are randomly initialized, so the donor's must
            // differ; bn/bias tensors initialize identically pre-training
            if a.name.starts_with("conv") && a.name.ends_with("weight") {
                assert_ne!(a.value.data(), b.value.data(), "{} unchanged", a.name);
            } else if !names.contains(&a.name) {
                assert_eq!(a.value.data(), b.value.data(), "{} diverged", a.name);
            }
        }
    }
}
