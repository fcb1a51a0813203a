//! Ablation harness: trains every requested network variant under an
//! identical data/seed protocol, evaluates the offline metrics and the
//! closed-loop failure rates per theme, and emits the comparison report
//! (raw CSV plus an aligned text table).

use std::collections::BTreeMap;
use std::path::Path;

use crate::augment::{BrightnessSpec, CropSpec};
use crate::error::{Error, Result};
use crate::image::{ImageBuf, SegMap};
use crate::metrics::{mce, offline_failures, rmse, FailureScanConfig};
use crate::model::config::{AtnConfig, Backbone, Variant};
use crate::model::controller::AtnController;
use crate::model::features::{build_frame_store, build_window_dataset, evaluate_series, FlowSource};
use crate::model::net::AtnModel;
use crate::model::pretext::{pretext_pretrain, PretextConfig};
use crate::model::train::{train_policy, TrainConfig};
use crate::rng::Rng;
use crate::sim::dataset::{collect_demonstrations, CollectConfig};
use crate::sim::rollout::{closed_loop_rollout, RolloutConfig};
use crate::sim::track::{generate_track, Theme};
use crate::tensor::Tensor;
use crate::vision::flow::FlowConfig;
use crate::vision::segnet::{train_segmentation, SegTrainConfig};

#[derive(Clone, Debug)]
pub struct AblationConfig {
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub collect: CollectConfig,
    pub crop: CropSpec,
    pub flow: FlowConfig,
    pub segnet: SegTrainConfig,
    pub pretext: PretextConfig,
    pub train: TrainConfig,
    pub base_model: AtnConfig,
    pub rollout: RolloutConfig,
    /// Unseen-theme evaluation track seeds.
    pub suburb_seed: u64,
    pub mountain_seed: u64,
    pub failure_scan: FailureScanConfig,
    /// Validation-RMSE threshold for the epochs-to-reach comparison
    /// between transfer and scratch backbones.
    pub transfer_threshold_deg: f64,
}

/// One (variant, seed) outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct VariantResult {
    pub variant: String,
    pub seed: u64,
    pub rmse_train: f64,
    pub rmse_test: f64,
    pub mce_train: f64,
    pub mce_test: f64,
    /// theme name -> failures per 10 km (closed loop).
    pub fail_per_10km: BTreeMap<String, f64>,
    /// Offline failure rate on the held-out split.
    pub offline_fail_per_10km: f64,
    /// First epoch (1-based count of trained epochs) at which val RMSE
    /// reached the transfer threshold; epochs+1 when never reached.
    pub epochs_to_threshold: usize,
    /// "ok" or the failure description (NaN abort etc.).
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<VariantResult>,
}

impl AblationReport {
    /// Mean over the succeeded seeds of one variant.
    pub fn mean_of(&self, variant: &str) -> Option<VariantResult> {
        let rows: Vec<&VariantResult> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.status == "ok")
            .collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let mut fail: BTreeMap<String, f64> = BTreeMap::new();
        for r in &rows {
            for (k, v) in &r.fail_per_10km {
                *fail.entry(k.clone()).or_insert(0.0) += v / n;
            }
        }
        Some(VariantResult {
            variant: variant.to_string(),
            seed: 0,
            rmse_train: rows.iter().map(|r| r.rmse_train).sum::<f64>() / n,
            rmse_test: rows.iter().map(|r| r.rmse_test).sum::<f64>() / n,
            mce_train: rows.iter().map(|r| r.mce_train).sum::<f64>() / n,
            mce_test: rows.iter().map(|r| r.mce_test).sum::<f64>() / n,
            fail_per_10km: fail,
            offline_fail_per_10km: rows.iter().map(|r| r.offline_fail_per_10km).sum::<f64>() / n,
            epochs_to_threshold: (rows.iter().map(|r| r.epochs_to_threshold).sum::<usize>()
                as f64
                / n)
                .round() as usize,
            status: "mean".into(),
        })
    }

    pub fn variants(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for r in &self.rows {
            if !seen.contains(&r.variant) {
                seen.push(r.variant.clone());
            }
        }
        seen
    }
}

/// Run the full protocol. Per seed: collect data, train the shared
/// segmentation net, build the channel store, pretrain the pretext
/// backbone when requested, then train and evaluate every variant on the
/// identical store and split. A variant whose training aborts (NaN) is
/// marked failed and the run continues.
pub fn run_ablation(config: &AblationConfig) -> Result<AblationReport> {
    let mut report = AblationReport::default();
    let themes = [
        (Theme::Desert, config.collect.track_seeds[0]),
        (Theme::Suburb, config.suburb_seed),
        (Theme::Mountain, config.mountain_seed),
    ];
    for &seed in &config.seeds {
        eprintln!("ablation: seed {seed}: collecting + shared prep");
        let mut collect = config.collect.clone();
        collect.seed = Rng::derive(seed, "ablation-collect").next_u64();
        let collected = collect_demonstrations(&collect)?;
        let dataset = collected.dataset;

        // one segmentation net per seed, shared by every variant
        let (h, w) = (dataset.meta.height, dataset.meta.width);
        let top = config.crop.top_rows(h);
        let ch = config.crop.cropped_height(h);
        let step = (dataset.records.len() / config.segnet.min_frames.max(1)).max(1);
        let seg_frames: Vec<(ImageBuf, SegMap)> = dataset
            .records
            .iter()
            .step_by(step)
            .take(config.segnet.min_frames.max(200) * 2)
            .map(|r| {
                Ok((
                    r.image_buf(h, w).crop_rows(top, ch)?,
                    r.seg_map(h, w).crop_rows(top, ch)?,
                ))
            })
            .collect::<Result<_>>()?;
        let mut seg_cfg = config.segnet.clone();
        seg_cfg.seed = Rng::derive(seed, "ablation-segnet").next_u64();
        let (mut segnet, _) = train_segmentation(&seg_frames, &seg_cfg)?;

        let store = build_frame_store(
            &dataset,
            Some(&mut segnet),
            &config.crop,
            &config.flow,
            config.base_model.input_height,
            8.0,
            FlowSource::PrevImages(&collected.prev_images),
        )?;
        let windows = build_window_dataset(&store, 0.1, true, BrightnessSpec::DEFAULT, seed)?;

        // pretext backbone once per seed, only if a transfer row is asked
        let pretext_tensors: Option<Vec<(String, Tensor<f32>)>> =
            if config.variants.contains(&Variant::PretextTransfer) {
                let mut pcfg = config.pretext.clone();
                pcfg.seed = Rng::derive(seed, "ablation-pretext").next_u64();
                pcfg.atn = AtnConfig {
                    backbone: Backbone::Base,
                    ..config.base_model.clone()
                };
                let (tensors, _) = pretext_pretrain(&mut segnet, &pcfg)?;
                Some(tensors)
            } else {
                None
            };

        for &variant in &config.variants {
            eprintln!("ablation: seed {seed}: training {}", variant.name());
            let mut model_cfg = AtnConfig::for_variant(variant);
            model_cfg.input_height = config.base_model.input_height;
            model_cfg.input_width = config.base_model.input_width;
            model_cfg.conv_dropout = config.base_model.conv_dropout;
            model_cfg.fc_dropout = config.base_model.fc_dropout;
            model_cfg.window = config.base_model.window;
            let mut rng = Rng::derive(seed, &format!("ablation-init-{}", variant.name()));
            let mut model = AtnModel::build(&model_cfg, &mut rng)?;
            if variant == Variant::PretextTransfer {
                model.load_backbone(pretext_tensors.as_ref().expect("pretext trained"))?;
            }
            let mut tcfg = config.train.clone();
            tcfg.seed = Rng::derive(seed, "ablation-train").next_u64();

            let row = match train_policy(&mut model, &store, &windows, &tcfg, None) {
                Ok(train_report) => {
                    let train_series =
                        evaluate_series(&mut model, &store, &windows.train_episodes)?;
                    let test_series = evaluate_series(&mut model, &store, &windows.val_episodes)?;
                    let offline = offline_failures(&test_series, &config.failure_scan)?;
                    let epochs_to = train_report
                        .epochs
                        .iter()
                        .position(|s| s.val_rmse <= config.transfer_threshold_deg)
                        .map(|i| i + 1)
                        .unwrap_or(train_report.epochs.len() + 1);

                    let mut fail = BTreeMap::new();
                    let mut rollout_status = "ok".to_string();
                    for (theme, track_seed) in themes {
                        let track = generate_track(track_seed, theme);
                        let segnet_for_run = if model_cfg.enable_segmentation {
                            Some(segnet.clone())
                        } else {
                            None
                        };
                        let stride = (collect.control_hz / collect.sample_hz).round() as usize;
                        let mut controller = AtnController::new(
                            model.clone(),
                            segnet_for_run,
                            config.crop,
                            config.flow,
                            stride.max(1),
                        )?;
                        match closed_loop_rollout(&mut controller, &track, &config.rollout) {
                            Ok(log) => {
                                fail.insert(theme.name().to_string(), log.failures_per_10km());
                            }
                            Err(e) => {
                                fail.insert(theme.name().to_string(), f64::INFINITY);
                                rollout_status = format!("rollout {}: {e}", theme.name());
                            }
                        }
                    }
                    VariantResult {
                        variant: variant.name().to_string(),
                        seed,
                        rmse_train: rmse(&train_series)?,
                        rmse_test: rmse(&test_series)?,
                        mce_train: mce(&train_series)?,
                        mce_test: mce(&test_series)?,
                        fail_per_10km: fail,
                        offline_fail_per_10km: offline.per_10km,
                        epochs_to_threshold: epochs_to,
                        status: rollout_status,
                    }
                }
                Err(e) => VariantResult {
                    variant: variant.name().to_string(),
                    seed,
                    rmse_train: f64::NAN,
                    rmse_test: f64::NAN,
                    mce_train: f64::NAN,
                    mce_test: f64::NAN,
                    fail_per_10km: BTreeMap::new(),
                    offline_fail_per_10km: f64::NAN,
                    epochs_to_threshold: 0,
                    status: format!("failed: {e}"),
                },
            };
            report.rows.push(row);
        }
    }
    Ok(report)
}

const CSV_HEADER: &str = "variant,seed,rmse_train,rmse_test,mce_train,mce_test,fail_per_10km_desert,fail_per_10km_suburb,fail_per_10km_mountain,offline_fail_per_10km,epochs_to_threshold,status";

/// Raw-precision CSV: per-(variant, seed) rows, then per-variant mean
/// rows (seed column "mean").
pub fn report_to_csv(report: &AblationReport) -> String {
    let fail = |r: &VariantResult, theme: &str| -> String {
        r.fail_per_10km
            .get(theme)
            .map(|v| format!("{v}"))
            .unwrap_or_else(|| "nan".into())
    };
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let mut write_row = |r: &VariantResult, seed_label: String| {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            seed_label,
            r.rmse_train,
            r.rmse_test,
            r.mce_train,
            r.mce_test,
            fail(r, "desert"),
            fail(r, "suburb"),
            fail(r, "mountain"),
            r.offline_fail_per_10km,
            r.epochs_to_threshold,
            r.status.replace(',', ";")
        ));
    };
    for r in &report.rows {
        write_row(r, r.seed.to_string());
    }
    for variant in report.variants() {
        if let Some(mean) = report.mean_of(&variant) {
            write_row(&mean, "mean".into());
        }
    }
    out
}

/// Aligned human-readable table, values rounded to two decimals.
pub fn report_to_text(report: &AblationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>6} {:>11} {:>10} {:>10} {:>9} {:>8} {:>8} {:>9}  {}\n",
        "variant",
        "seed",
        "rmse_train",
        "rmse_test",
        "mce_train",
        "mce_test",
        "f/desert",
        "f/suburb",
        "f/mountn",
        "status"
    ));
    let mut push = |r: &VariantResult, seed_label: String| {
        let f = |x: f64| {
            if x.is_finite() {
                format!("{x:.2}")
            } else {
                "-".into()
            }
        };
        let fr = |theme: &str| {
            r.fail_per_10km
                .get(theme)
                .map(|&v| f(v))
                .unwrap_or_else(|| "-".into())
        };
        out.push_str(&format!(
            "{:<22} {:>6} {:>11} {:>10} {:>10} {:>9} {:>8} {:>8} {:>9}  {}\n",
            r.variant,
            seed_label,
            f(r.rmse_train),
            f(r.rmse_test),
            f(r.mce_train),
            f(r.mce_test),
            fr("desert"),
            fr("suburb"),
            fr("mountain"),
            r.status
        ));
    };
    for r in &report.rows {
        push(r, r.seed.to_string());
    }
    for variant in report.variants() {
        if let Some(mean) = report.mean_of(&variant) {
            push(&mean, "mean".into());
        }
    }
    out
}

pub fn write_report(report: &AblationReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("ablation.csv"), report_to_csv(report))?;
    std::fs::write(dir.join("ablation.txt"), report_to_text(report))?;
    Ok(())
}

/// Reload the per-seed rows of a report CSV (mean rows are recomputed).
pub fn read_report_csv(text: &str) -> Result<AblationReport> {
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty report csv".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Format(format!("unexpected report header {header:?}")));
    }
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 12 {
            return Err(Error::Format(format!("bad report row {line:?}")));
        }
        if parts[1] == "mean" {
            continue;
        }
        let num = |s: &str| -> f64 { s.parse().unwrap_or(f64::NAN) };
        let mut fail = BTreeMap::new();
        for (theme, idx) in [("desert", 6), ("suburb", 7), ("mountain", 8)] {
            let v = num(parts[idx]);
            if v.is_finite() {
                fail.insert(theme.to_string(), v);
            }
        }
        rows.push(VariantResult {
            variant: parts[0].to_string(),
            seed: parts[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed in {line:?}")))?,
            rmse_train: num(parts[2]),
            rmse_test: num(parts[3]),
            mce_train: num(parts[4]),
            mce_test: num(parts[5]),
            fail_per_10km: fail,
            offline_fail_per_10km: num(parts[9]),
            epochs_to_threshold: parts[10].parse().unwrap_or(0),
            status: parts[11].to_string(),
        });
    }
    Ok(AblationReport { rows })
}
