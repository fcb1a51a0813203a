//! Network architecture configuration and the Table-2-style variant set.

use crate::error::{Error, Result};
use crate::rng::fnv1a64;
use crate::vision::stack::StackConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backbone {
    /// Convolutional stack trained from scratch.
    Base,
    /// Convolutional stack initialized from the pretext-task checkpoint.
    PretextTransfer,
}

/// The ablation variants: the baseline CNN, the full network, the four
/// single-component removals, and the pretext-transfer run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    BaselineCnn,
    Full,
    WithoutSegmentation,
    WithoutLstm,
    WithoutFlow,
    WithoutKinematics,
    PretextTransfer,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::BaselineCnn,
        Variant::Full,
        Variant::WithoutSegmentation,
        Variant::WithoutLstm,
        Variant::WithoutFlow,
        Variant::WithoutKinematics,
        Variant::PretextTransfer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::BaselineCnn => "baseline_cnn",
            Variant::Full => "atn_full",
            Variant::WithoutSegmentation => "atn_no_segmentation",
            Variant::WithoutLstm => "atn_no_lstm",
            Variant::WithoutFlow => "atn_no_flow",
            Variant::WithoutKinematics => "atn_no_kinematics",
            Variant::PretextTransfer => "atn_transfer",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .iter()
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtnConfig {
    pub enable_segmentation: bool,
    pub enable_flow: bool,
    pub enable_lstm: bool,
    pub enable_kinematics: bool,
    pub backbone: Backbone,
    /// Sliding-window length consumed by the LSTM.
    pub window: usize,
    pub conv_depths: Vec<usize>,
    pub kernel_sizes: Vec<usize>,
    pub strides: Vec<usize>,
    pub paddings: Vec<usize>,
    pub lstm_width: usize,
    pub fc_widths: Vec<usize>,
    pub conv_dropout: f64,
    pub fc_dropout: f64,
    pub input_height: usize,
    pub input_width: usize,
    /// Final scalar is output_scale * tanh(z) degrees.
    pub output_scale_deg: f64,
    pub one_hot_seg: bool,
}

impl Default for AtnConfig {
    fn default() -> Self {
        AtnConfig {
            enable_segmentation: true,
            enable_flow: true,
            enable_lstm: true,
            enable_kinematics: true,
            backbone: Backbone::Base,
            window: 3,
            conv_depths: vec![24, 36, 48, 64, 64],
            kernel_sizes: vec![5, 5, 5, 3, 3],
            strides: vec![2, 2, 2, 1, 1],
            paddings: vec![0, 0, 0, 1, 1],
            lstm_width: 128,
            fc_widths: vec![256, 128, 64],
            conv_dropout: 0.1,
            fc_dropout: 0.2,
            input_height: 48,
            input_width: 64,
            output_scale_deg: 90.0,
            one_hot_seg: false,
        }
    }
}

impl AtnConfig {
    pub fn for_variant(variant: Variant) -> AtnConfig {
        let mut cfg = AtnConfig::default();
        match variant {
            Variant::BaselineCnn => {
                cfg.enable_segmentation = false;
                cfg.enable_flow = false;
                cfg.enable_lstm = false;
                cfg.enable_kinematics = false;
            }
            Variant::Full => {}
            Variant::WithoutSegmentation => cfg.enable_segmentation = false,
            Variant::WithoutLstm => cfg.enable_lstm = false,
            Variant::WithoutFlow => cfg.enable_flow = false,
            Variant::WithoutKinematics => cfg.enable_kinematics = false,
            Variant::PretextTransfer => cfg.backbone = Backbone::PretextTransfer,
        }
        cfg
    }

    /// Input channel count implied by the enabled components.
    pub fn channels(&self) -> usize {
        let seg = if self.enable_segmentation {
            if self.one_hot_seg {
                9
            } else {
                1
            }
        } else {
            0
        };
        let flow = if self.enable_flow { 2 } else { 0 };
        3 + seg + flow
    }

    /// Effective window length (1 when the LSTM is disabled).
    pub fn effective_window(&self) -> usize {
        if self.enable_lstm {
            self.window
        } else {
            1
        }
    }

    pub fn stack_config(&self) -> StackConfig {
        StackConfig {
            one_hot_seg: self.one_hot_seg,
            ..StackConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.conv_depths.len();
        if n == 0
            || self.kernel_sizes.len() != n
            || self.strides.len() != n
            || self.paddings.len() != n
        {
            return Err(Error::Config(format!(
                "conv layer lists disagree: {} depths, {} kernels, {} strides, {} paddings",
                n,
                self.kernel_sizes.len(),
                self.strides.len(),
                self.paddings.len()
            )));
        }
        if self.window == 0 {
            return Err(Error::Config("window must be >= 1".into()));
        }
        if self.lstm_width == 0 && self.enable_lstm {
            return Err(Error::Config("lstm width must be positive".into()));
        }
        for (name, rate) in [("conv_dropout", self.conv_dropout), ("fc_dropout", self.fc_dropout)]
        {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must lie in [0,1), got {rate}")));
            }
        }
        if self.output_scale_deg <= 0.0 {
            return Err(Error::Config("output scale must be positive".into()));
        }
        Ok(())
    }

    /// Flat key-value serialization, sorted by key; embedded in the
    /// checkpoint manifest and hashed as the architecture fingerprint.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("backbone={}", match self.backbone {
                Backbone::Base => "base",
                Backbone::PretextTransfer => "pretext_transfer",
            }),
            format!("conv_depths={}", join(&self.conv_depths)),
            format!("conv_dropout={}", self.conv_dropout),
            format!("enable_flow={}", self.enable_flow),
            format!("enable_kinematics={}", self.enable_kinematics),
            format!("enable_lstm={}", self.enable_lstm),
            format!("enable_segmentation={}", self.enable_segmentation),
            format!("fc_dropout={}", self.fc_dropout),
            format!("fc_widths={}", join(&self.fc_widths)),
            format!("input_height={}", self.input_height),
            format!("input_width={}", self.input_width),
            format!("kernel_sizes={}", join(&self.kernel_sizes)),
            format!("lstm_width={}", self.lstm_width),
            format!("one_hot_seg={}", self.one_hot_seg),
            format!("output_scale_deg={}", self.output_scale_deg),
            format!("paddings={}", join(&self.paddings)),
            format!("strides={}", join(&self.strides)),
            format!("window={}", self.window),
        ];
        lines.sort();
        lines.join("\n")
    }

    pub fn parse_text(text: &str) -> Result<AtnConfig> {
        let mut cfg = AtnConfig::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad config line {line:?}")))?;
            match key {
                "backbone" => {
                    cfg.backbone = match value {
                        "base" => Backbone::Base,
                        "pretext_transfer" => Backbone::PretextTransfer,
                        other => {
                            return Err(Error::Format(format!("unknown backbone {other:?}")))
                        }
                    }
                }
                "conv_depths" => cfg.conv_depths = split(value)?,
                "conv_dropout" => cfg.conv_dropout = parse(value)?,
                "enable_flow" => cfg.enable_flow = parse(value)?,
                "enable_kinematics" => cfg.enable_kinematics = parse(value)?,
                "enable_lstm" => cfg.enable_lstm = parse(value)?,
                "enable_segmentation" => cfg.enable_segmentation = parse(value)?,
                "fc_dropout" => cfg.fc_dropout = parse(value)?,
                "fc_widths" => cfg.fc_widths = split(value)?,
                "input_height" => cfg.input_height = parse(value)?,
                "input_width" => cfg.input_width = parse(value)?,
                "kernel_sizes" => cfg.kernel_sizes = split(value)?,
                "lstm_width" => cfg.lstm_width = parse(value)?,
                "one_hot_seg" => cfg.one_hot_seg = parse(value)?,
                "output_scale_deg" => cfg.output_scale_deg = parse(value)?,
                "paddings" => cfg.paddings = split(value)?,
                "strides" => cfg.strides = split(value)?,
                "window" => cfg.window = parse(value)?,
                other => return Err(Error::Format(format!("unknown config key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.to_text().as_bytes())
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad list element {x:?}")))
        })
        .collect()
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad config value {s:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_math_per_variant() {
        assert_eq!(AtnConfig::for_variant(Variant::Full).channels(), 6);
        assert_eq!(
            AtnConfig::for_variant(Variant::WithoutSegmentation).channels(),
            5
        );
        assert_eq!(AtnConfig::for_variant(Variant::WithoutFlow).channels(), 4);
        assert_eq!(AtnConfig::for_variant(Variant::BaselineCnn).channels(), 3);
    }

    #[test]
    fn config_text_round_trips() {
        for v in Variant::ALL {
            let cfg = AtnConfig::for_variant(v);
            let back = AtnConfig::parse_text(&cfg.to_text()).unwrap();
            assert_eq!(cfg, back);
            assert_eq!(cfg.fingerprint(), back.fingerprint());
        }
    }

    #[test]
    fn fingerprints_differ_across_variants() {
        let a = AtnConfig::for_variant(Variant::Full).fingerprint();
        let b = AtnConfig::for_variant(Variant::WithoutFlow).fingerprint();
        assert_ne!(a, b);
    }

    #[test]
    fn lstm_disabled_means_window_one() {
        let cfg = AtnConfig::for_variant(Variant::WithoutLstm);
        assert_eq!(cfg.effective_window(), 1);
        assert_eq!(AtnConfig::default().effective_window(), 3);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = AtnConfig::default();
        cfg.strides = vec![2, 2];
        assert!(cfg.validate().is_err());
        let mut cfg = AtnConfig::default();
        cfg.fc_dropout = 1.0;
        assert!(cfg.validate().is_err());
    }
}
