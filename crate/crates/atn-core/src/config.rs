//! Flat key-value run configuration: one defaults table covering every
//! tunable in the pipeline, a strict parser (unknown keys are rejected),
//! and typed getters. Every command writes its fully resolved config
//! next to its outputs so a run is reproducible from that file alone.

use std::collections::BTreeMap;
use std::path::Path;

use crate::augment::{BrightnessSpec, CropSpec};
use crate::error::{Error, Result};
use crate::metrics::FailureScanConfig;
use crate::model::config::{AtnConfig, Variant};
use crate::model::pretext::PretextConfig;
use crate::model::train::TrainConfig;
use crate::rng::Rng;
use crate::sim::dataset::CollectConfig;
use crate::sim::dynamics::DynamicsConfig;
use crate::sim::expert::PurePursuit;
use crate::sim::render::RenderConfig;
use crate::sim::rollout::RolloutConfig;
use crate::sim::track::Theme;
use crate::tensor::optim::OptimizerConfig;
use crate::vision::flow::FlowConfig;
use crate::vision::segnet::SegTrainConfig;

/// (key, default, help) rows; the single source of truth for known keys.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("seed", "42"),
    // demonstration collection
    ("collect.theme", "desert"),
    ("collect.track_seeds", "101,102,103,104"),
    ("collect.duration_s", "7200"),
    ("collect.episode_s", "60"),
    ("collect.control_hz", "10"),
    ("collect.sample_hz", "2"),
    ("collect.cruise_mps", "15"),
    ("collect.start_offset_m", "0.8"),
    ("collect.start_heading_deg", "8"),
    ("collect.noise_deg", "3"),
    // rendering
    ("render.noise", "0.03"),
    ("render.lighting_jitter", "0.15"),
    ("render.scenery", "true"),
    // preprocessing / augmentation
    ("crop.top", "0.25"),
    ("crop.bottom", "0.125"),
    ("augment.enable", "true"),
    ("augment.flip", "true"),
    ("augment.brightness_low", "0.3"),
    ("augment.brightness_high", "1.7"),
    ("augment.brightness_literal", "false"),
    // optical flow
    ("flow.alpha", "10"),
    ("flow.iterations", "100"),
    ("flow.levels", "3"),
    ("flow.max_px", "8"),
    // segmentation net training
    ("segnet.frames", "400"),
    ("segnet.epochs", "8"),
    ("segnet.batch", "8"),
    ("segnet.lr", "0.01"),
    ("segnet.val_fraction", "0.15"),
    // pretext pretraining
    ("pretext.frames_per_theme", "500"),
    ("pretext.epochs", "8"),
    ("pretext.batch", "32"),
    ("pretext.lr", "0.001"),
    ("pretext.curve_threshold", "0.008"),
    ("pretext.lookahead_m", "15"),
    // network architecture
    ("model.variant", "atn_full"),
    ("model.window", "3"),
    ("model.lstm_width", "128"),
    ("model.conv_depths", "24,36,48,64,64"),
    ("model.kernel_sizes", "5,5,5,3,3"),
    ("model.strides", "2,2,2,1,1"),
    ("model.paddings", "0,0,0,1,1"),
    ("model.fc_widths", "256,128,64"),
    ("model.conv_dropout", "0.1"),
    ("model.fc_dropout", "0.2"),
    ("model.input_height", "48"),
    ("model.one_hot_seg", "false"),
    ("model.output_scale_deg", "90"),
    // policy training
    ("train.epochs", "8"),
    ("train.batch", "32"),
    ("train.lr", "0.001"),
    ("train.beta1", "0.9"),
    ("train.beta2", "0.999"),
    ("train.epsilon", "1e-8"),
    ("train.patience", "3"),
    ("train.min_delta", "0.001"),
    ("train.halving", "0.5"),
    ("train.val_fraction", "0.1"),
    ("train.early_stop_rmse", "0"),
    ("train.resume", ""),
    // offline evaluation
    ("eval.split", "val"),
    ("eval.failure_window", "10"),
    ("eval.failure_threshold_deg", "5"),
    // closed-loop rollout
    ("rollout.theme", "desert"),
    ("rollout.track_seed", "101"),
    ("rollout.distance_km", "10"),
    ("rollout.dt", "0.1"),
    ("rollout.substeps", "10"),
    ("rollout.keep_frames", "false"),
    // ablation protocol
    (
        "ablate.variants",
        "baseline_cnn,atn_full,atn_no_segmentation,atn_no_lstm,atn_no_flow,atn_no_kinematics,atn_transfer",
    ),
    ("ablate.seeds", "1,2,3"),
    ("ablate.duration_s", "1200"),
    ("ablate.epochs", "6"),
    ("ablate.rollout_km", "5"),
    ("ablate.transfer_threshold_deg", "2.5"),
    ("ablate.suburb_seed", "901"),
    ("ablate.mountain_seed", "902"),
    ("ablate.pretext_frames_per_theme", "400"),
    // artifact paths consumed by the commands
    ("paths.dataset", "out/dataset"),
    ("paths.segnet", "out/pretrain/segnet.ckpt"),
    ("paths.pretext", "out/pretrain/pretext.ckpt"),
    ("paths.checkpoint", "out/train/model.ckpt"),
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn defaults() -> RunConfig {
        let values = DEFAULTS
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        RunConfig { values }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !DEFAULTS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Parse `key = value` lines ('#' comments allowed) over defaults.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {} has no '=': {raw:?}", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("reading config {}: {e}", path.display()),
            ))
        })?;
        RunConfig::parse(&text)
    }

    /// Sorted `key = value` lines: the fully resolved configuration.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("resolved.cfg"), self.resolved_text())?;
        Ok(())
    }

    fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))
    }

    pub fn get_str(&self, key: &str) -> Result<String> {
        Ok(self.raw(key)?.to_string())
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::Config(format!("config {key} is not a number")))
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::Config(format!("config {key} is not an integer")))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64> {
        self.raw(key)?
            .parse()
            .map_err(|_| Error::Config(format!("config {key} is not an integer")))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        match self.raw(key)? {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!(
                "config {key} is not a boolean (got {other:?})"
            ))),
        }
    }

    pub fn get_u64_list(&self, key: &str) -> Result<Vec<u64>> {
        self.raw(key)?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("config {key} has a bad element {s:?}")))
            })
            .collect()
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Vec<usize>> {
        self.raw(key)?
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("config {key} has a bad element {s:?}")))
            })
            .collect()
    }

    /// Root seed; all component streams derive from it.
    pub fn seed(&self) -> Result<u64> {
        self.get_u64("seed")
    }

    pub fn crop_spec(&self) -> Result<CropSpec> {
        let spec = CropSpec {
            top_fraction: self.get_f64("crop.top")?,
            bottom_fraction: self.get_f64("crop.bottom")?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn brightness_spec(&self) -> Result<BrightnessSpec> {
        if self.get_bool("augment.brightness_literal")? {
            Ok(BrightnessSpec::LITERAL)
        } else {
            Ok(BrightnessSpec {
                low: self.get_f64("augment.brightness_low")?,
                high: self.get_f64("augment.brightness_high")?,
            })
        }
    }

    pub fn render_config(&self, seed_tag: &str) -> Result<RenderConfig> {
        Ok(RenderConfig {
            noise_amp: self.get_f64("render.noise")? as f32,
            lighting_jitter: self.get_f64("render.lighting_jitter")? as f32,
            enable_scenery: self.get_bool("render.scenery")?,
            seed: Rng::derive(self.seed()?, seed_tag).next_u64(),
            ..RenderConfig::default()
        })
    }

    pub fn flow_config(&self) -> Result<FlowConfig> {
        Ok(FlowConfig {
            alpha: self.get_f64("flow.alpha")?,
            iterations: self.get_usize("flow.iterations")?,
            max_levels: self.get_usize("flow.levels")?,
        })
    }

    pub fn flow_norm(&self) -> Result<f32> {
        Ok(self.get_f64("flow.max_px")? as f32)
    }

    pub fn collect_config(&self) -> Result<CollectConfig> {
        Ok(CollectConfig {
            theme: Theme::parse(&self.get_str("collect.theme")?)?,
            track_seeds: self.get_u64_list("collect.track_seeds")?,
            duration_seconds: self.get_f64("collect.duration_s")?,
            episode_seconds: self.get_f64("collect.episode_s")?,
            control_hz: self.get_f64("collect.control_hz")?,
            sample_hz: self.get_f64("collect.sample_hz")?,
            cruise_speed: self.get_f64("collect.cruise_mps")?,
            start_offset_max: self.get_f64("collect.start_offset_m")?,
            start_heading_err_deg: self.get_f64("collect.start_heading_deg")?,
            steering_noise_deg: self.get_f64("collect.noise_deg")?,
            render: self.render_config("render-collect")?,
            dynamics: DynamicsConfig::default(),
            expert: PurePursuit::default(),
            seed: Rng::derive(self.seed()?, "collect").next_u64(),
        })
    }

    pub fn segnet_config(&self) -> Result<SegTrainConfig> {
        Ok(SegTrainConfig {
            epochs: self.get_usize("segnet.epochs")?,
            batch_size: self.get_usize("segnet.batch")?,
            learning_rate: self.get_f64("segnet.lr")?,
            min_frames: 200,
            val_fraction: self.get_f64("segnet.val_fraction")?,
            seed: Rng::derive(self.seed()?, "segnet").next_u64(),
        })
    }

    pub fn segnet_frames(&self) -> Result<usize> {
        self.get_usize("segnet.frames")
    }

    pub fn atn_config(&self, variant: Variant) -> Result<AtnConfig> {
        let mut cfg = AtnConfig::for_variant(variant);
        cfg.window = self.get_usize("model.window")?;
        cfg.lstm_width = self.get_usize("model.lstm_width")?;
        cfg.conv_depths = self.get_usize_list("model.conv_depths")?;
        cfg.kernel_sizes = self.get_usize_list("model.kernel_sizes")?;
        cfg.strides = self.get_usize_list("model.strides")?;
        cfg.paddings = self.get_usize_list("model.paddings")?;
        cfg.fc_widths = self.get_usize_list("model.fc_widths")?;
        cfg.conv_dropout = self.get_f64("model.conv_dropout")?;
        cfg.fc_dropout = self.get_f64("model.fc_dropout")?;
        cfg.input_height = self.get_usize("model.input_height")?;
        cfg.one_hot_seg = self.get_bool("model.one_hot_seg")?;
        cfg.output_scale_deg = self.get_f64("model.output_scale_deg")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn variant(&self) -> Result<Variant> {
        Variant::parse(&self.get_str("model.variant")?)
    }

    pub fn optimizer_config(&self) -> Result<OptimizerConfig> {
        let cfg = OptimizerConfig {
            learning_rate: self.get_f64("train.lr")?,
            beta1: self.get_f64("train.beta1")?,
            beta2: self.get_f64("train.beta2")?,
            epsilon: self.get_f64("train.epsilon")?,
            plateau_patience: self.get_usize("train.patience")?,
            plateau_min_delta: self.get_f64("train.min_delta")?,
            halving_factor: self.get_f64("train.halving")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let stop = self.get_f64("train.early_stop_rmse")?;
        Ok(TrainConfig {
            epochs: self.get_usize("train.epochs")?,
            batch_size: self.get_usize("train.batch")?,
            optimizer: self.optimizer_config()?,
            early_stop_val_rmse: if stop > 0.0 { Some(stop) } else { None },
            seed: Rng::derive(self.seed()?, "train").next_u64(),
            start_epoch: 0,
            resume_scheduler: None,
        })
    }

    pub fn pretext_config(&self) -> Result<PretextConfig> {
        Ok(PretextConfig {
            frames_per_theme: self.get_usize("pretext.frames_per_theme")?,
            epochs: self.get_usize("pretext.epochs")?,
            batch_size: self.get_usize("pretext.batch")?,
            learning_rate: self.get_f64("pretext.lr")?,
            curve_threshold: self.get_f64("pretext.curve_threshold")?,
            lookahead_m: self.get_f64("pretext.lookahead_m")?,
            seed: Rng::derive(self.seed()?, "pretext").next_u64(),
            atn: self.atn_config(Variant::Full)?,
            crop: self.crop_spec()?,
            flow: self.flow_config()?,
            render: self.render_config("render-pretext")?,
            ..PretextConfig::default()
        })
    }

    pub fn rollout_config(&self) -> Result<RolloutConfig> {
        Ok(RolloutConfig {
            distance_km: self.get_f64("rollout.distance_km")?,
            control_dt: self.get_f64("rollout.dt")?,
            physics_substeps: self.get_usize("rollout.substeps")?,
            cruise_speed: self.get_f64("collect.cruise_mps")?,
            render: self.render_config("render-rollout")?,
            dynamics: DynamicsConfig::default(),
            keep_frames: self.get_bool("rollout.keep_frames")?,
            step_budget_factor: 3.0,
        })
    }

    pub fn failure_scan(&self) -> Result<FailureScanConfig> {
        Ok(FailureScanConfig {
            window: self.get_usize("eval.failure_window")?,
            threshold_deg: self.get_f64("eval.failure_threshold_deg")?,
        })
    }
}
