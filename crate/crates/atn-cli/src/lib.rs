//! Command implementations behind the `atn` binary. Each command takes
//! the resolved run configuration and an output directory, writes its
//! artifacts there along with `resolved.cfg`, and is reproducible from
//! that file alone.

use std::path::{Path, PathBuf};

use atn_core::ablation::{
    read_report_csv, report_to_text, run_ablation, write_report, AblationConfig,
};
use atn_core::augment::{materialize_augmented_dataset, provenance_sidecar};
use atn_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use atn_core::config::RunConfig;
use atn_core::error::{Error, Result};
use atn_core::image::{ImageBuf, SegMap};
use atn_core::metrics::{mce, offline_failures, rmse};
use atn_core::model::config::{Backbone, Variant};
use atn_core::model::controller::AtnController;
use atn_core::model::features::{build_frame_store, build_window_dataset, evaluate_series, FlowSource, FrameStore, WindowDataset};
use atn_core::model::net::AtnModel;
use atn_core::model::pretext::pretext_pretrain;
use atn_core::model::train::{loss_curve_csv, train_policy, TrainConfig};
use atn_core::rng::Rng;
use atn_core::sim::dataset::{collect_demonstrations, read_dataset, write_dataset, Dataset};
use atn_core::sim::rollout::closed_loop_rollout;
use atn_core::sim::track::{generate_track, Theme};
use atn_core::vision::segnet::{train_segmentation, SegNet};

#[derive(Clone, Debug)]
pub struct CliArgs {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub overrides: Vec<(String, String)>,
    pub out_dir: PathBuf,
    pub csv_path: Option<PathBuf>,
}

pub const USAGE: &str = "usage: atn <command> [options]

commands:
  generate   collect expert demonstrations and write the dataset
             (plus the augmented training set unless --no-augment)
  pretrain   train the segmentation net and the pretext backbone
  train      train a policy variant on a recorded dataset
  evaluate   offline metrics (RMSE / MCE / failure rate) for a checkpoint
  rollout    closed-loop rollout of a checkpoint on one track
  ablate     full variant-comparison protocol, emits the report
  report     re-render a report CSV as an aligned text table

options:
  --config FILE     read `key = value` settings (defaults otherwise)
  --set KEY=VALUE   override one setting (repeatable; wins over file)
  --out DIR         output directory (default: out/<command>)
  --no-augment      generate: write the raw dataset only
  --csv FILE        report: the ablation CSV to render
";

pub fn parse_args(args: &[String]) -> Result<CliArgs> {
    if args.is_empty() {
        return Err(Error::Usage(USAGE.into()));
    }
    let command = args[0].clone();
    let known = [
        "generate", "pretrain", "train", "evaluate", "rollout", "ablate", "report",
    ];
    if !known.contains(&command.as_str()) {
        return Err(Error::Usage(format!(
            "unknown command {command:?}\n\n{USAGE}"
        )));
    }
    let mut config_path = None;
    let mut overrides = Vec::new();
    let mut out_dir = None;
    let mut csv_path = None;
    let mut i = 1;
    while i < args.len() {
        match args[i].as_str() {
            "--config" => {
                i += 1;
                config_path = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    Error::Usage("--config needs a file path".into())
                })?));
            }
            "--set" => {
                i += 1;
                let kv = args
                    .get(i)
                    .ok_or_else(|| Error::Usage("--set needs KEY=VALUE".into()))?;
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Usage(format!("bad --set {kv:?}")))?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            "--out" => {
                i += 1;
                out_dir = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    Error::Usage("--out needs a directory".into())
                })?));
            }
            "--no-augment" => {
                overrides.push(("augment.enable".to_string(), "false".to_string()));
            }
            "--csv" => {
                i += 1;
                csv_path = Some(PathBuf::from(args.get(i).ok_or_else(|| {
                    Error::Usage("--csv needs a file path".into())
                })?));
            }
            other => {
                return Err(Error::Usage(format!("unknown option {other:?}\n\n{USAGE}")));
            }
        }
        i += 1;
    }
    Ok(CliArgs {
        out_dir: out_dir.unwrap_or_else(|| PathBuf::from(format!("out/{command}"))),
        command,
        config_path,
        overrides,
        csv_path,
    })
}

pub fn run(args: CliArgs) -> Result<()> {
    let mut config = match &args.config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::defaults(),
    };
    for (k, v) in &args.overrides {
        config.set(k, v)?;
    }
    match args.command.as_str() {
        "generate" => cmd_generate(&config, &args.out_dir),
        "pretrain" => cmd_pretrain(&config, &args.out_dir),
        "train" => cmd_train(&config, &args.out_dir),
        "evaluate" => cmd_evaluate(&config, &args.out_dir),
        "rollout" => cmd_rollout(&config, &args.out_dir),
        "ablate" => cmd_ablate(&config, &args.out_dir),
        "report" => cmd_report(&args),
        other => Err(Error::Usage(format!("unknown command {other:?}"))),
    }
}

/// Collect demonstrations, write the raw dataset, and (unless disabled)
/// the balanced augmented set with its provenance sidecar.
pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<()> {
    let collect = config.collect_config()?;
    let collected = collect_demonstrations(&collect)?;
    let dataset = collected.dataset;
    write_dataset(&out.join("raw"), &dataset)?;
    // flow cache: cropped flow against the previous camera frame, so
    // downstream consumers reconstruct the channel without re-rendering
    {
        let crop = config.crop_spec()?;
        let flow_cfg = config.flow_config()?;
        let (h, w) = (dataset.meta.height, dataset.meta.width);
        let top = crop.top_rows(h);
        let ch = crop.cropped_height(h);
        let mut fields = Vec::with_capacity(dataset.records.len());
        for (idx, rec) in dataset.records.iter().enumerate() {
            let prev = &collected.prev_images[idx];
            if prev.is_empty() {
                fields.push(atn_core::image::FlowField::zeros(ch, w));
                continue;
            }
            let cropped = rec.image_buf(h, w).crop_rows(top, ch)?;
            let mut prev_img = atn_core::image::ImageBuf::new(h, w);
            for (dst, &src) in prev_img.data.iter_mut().zip(prev) {
                *dst = src as f32 / 255.0;
            }
            let prev_c = prev_img.crop_rows(top, ch)?;
            fields.push(atn_core::vision::flow::compute_flow(&prev_c, &cropped, &flow_cfg)?);
        }
        atn_core::vision::stack::save_flow_cache(&out.join("raw").join("flow.cache"), &fields)?;
    }
    println!(
        "generate: {} records at {} Hz over {} episodes -> {}",
        dataset.record_count(),
        dataset.meta.hz,
        dataset.meta.episodes.len(),
        out.join("raw").display()
    );
    if config.get_bool("augment.enable")? {
        let (augmented, plan) = materialize_augmented_dataset(
            &dataset,
            &config.crop_spec()?,
            config.brightness_spec()?,
            config.get_bool("augment.flip")?,
            Rng::derive(config.seed()?, "augment").next_u64(),
        )?;
        write_dataset(&out.join("augmented"), &augmented)?;
        std::fs::write(
            out.join("augmented").join("provenance.txt"),
            provenance_sidecar(&plan),
        )?;
        println!(
            "generate: {} augmented samples -> {}",
            augmented.record_count(),
            out.join("augmented").display()
        );
    }
    config.write_resolved(out)?;
    Ok(())
}

fn check_dataset_path(config: &RunConfig) -> Result<PathBuf> {
    let path = PathBuf::from(config.get_str("paths.dataset")?);
    if !path.join("manifest.txt").exists() {
        return Err(Error::Usage(format!(
            "no dataset at {} (run `atn generate` first or set paths.dataset)",
            path.display()
        )));
    }
    Ok(path)
}

fn load_dataset_at(config: &RunConfig) -> Result<Dataset> {
    read_dataset(&check_dataset_path(config)?)
}

/// Evenly sampled (image, ground-truth map) training pairs, cropped.
fn seg_training_frames(
    config: &RunConfig,
    dataset: &Dataset,
) -> Result<Vec<(ImageBuf, SegMap)>> {
    let crop = config.crop_spec()?;
    let want = config.segnet_frames()?.max(200);
    let (h, w) = (dataset.meta.height, dataset.meta.width);
    let top = crop.top_rows(h);
    let ch = crop.cropped_height(h);
    let step = (dataset.records.len() / want).max(1);
    dataset
        .records
        .iter()
        .step_by(step)
        .take(want)
        .map(|r| {
            Ok((
                r.image_buf(h, w).crop_rows(top, ch)?,
                r.seg_map(h, w).crop_rows(top, ch)?,
            ))
        })
        .collect()
}

/// Train the segmentation net on the recorded ground truth, then the
/// pretext classifier; write both checkpoints.
pub fn cmd_pretrain(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let dataset = load_dataset_at(config)?;
    let frames = seg_training_frames(config, &dataset)?;
    let (mut segnet, seg_report) = train_segmentation(&frames, &config.segnet_config()?)?;
    segnet.save(&out.join("segnet.ckpt"), config.seed()?)?;
    println!(
        "pretrain: segnet held-out pixel accuracy {:.4} -> {}",
        seg_report.val_pixel_accuracy,
        out.join("segnet.ckpt").display()
    );

    let (tensors, pretext_report) = pretext_pretrain(&mut segnet, &config.pretext_config()?)?;
    let refs: Vec<(String, &atn_core::tensor::Tensor<f32>)> =
        tensors.iter().map(|(n, t)| (n.clone(), t)).collect();
    let pretext_hash = config.atn_config(Variant::Full)?.fingerprint();
    save_checkpoint(
        &out.join("pretext.ckpt"),
        pretext_hash,
        config.seed()?,
        &[(
            "pretext_accuracy".into(),
            format!("{}", pretext_report.heldout_accuracy),
        )],
        &refs,
    )?;
    println!(
        "pretrain: pretext held-out accuracy {:.4} over {} samples -> {}",
        pretext_report.heldout_accuracy,
        pretext_report.sample_count,
        out.join("pretext.ckpt").display()
    );
    let summary = format!(
        "segnet_pixel_accuracy {}\npretext_accuracy {}\n",
        seg_report.val_pixel_accuracy, pretext_report.heldout_accuracy
    );
    std::fs::write(out.join("pretrain_summary.txt"), summary)?;
    config.write_resolved(out)?;
    Ok(())
}

fn load_segnet_if_needed(config: &RunConfig, needs_seg: bool) -> Result<Option<SegNet>> {
    if !needs_seg {
        return Ok(None);
    }
    let path = PathBuf::from(config.get_str("paths.segnet")?);
    if !path.exists() {
        return Err(Error::Usage(format!(
            "segmentation checkpoint {} not found (run `atn pretrain` or set paths.segnet)",
            path.display()
        )));
    }
    Ok(Some(SegNet::load(&path)?))
}

/// Shared pipeline front half: dataset -> channel store -> window plan.
fn prepare_windows(
    config: &RunConfig,
    segnet: Option<&mut SegNet>,
) -> Result<(FrameStore, WindowDataset)> {
    let dataset_dir = check_dataset_path(config)?;
    let dataset = load_dataset_at(config)?;
    // camera-rate flow from the dataset's cache when present; otherwise
    // fall back to flow between successive records
    let cache_path = dataset_dir.join("flow.cache");
    let cached_flows = if cache_path.exists() {
        Some(atn_core::vision::stack::load_flow_cache(&cache_path)?)
    } else {
        eprintln!(
            "note: {} has no flow.cache; computing flow between successive records",
            dataset_dir.display()
        );
        None
    };
    let flow_source = match &cached_flows {
        Some(fields) => FlowSource::Precomputed(fields),
        None => FlowSource::PreviousRecord,
    };
    let store = build_frame_store(
        &dataset,
        segnet,
        &config.crop_spec()?,
        &config.flow_config()?,
        config.get_usize("model.input_height")?,
        config.flow_norm()?,
        flow_source,
    )?;
    let windows = build_window_dataset(
        &store,
        config.get_f64("train.val_fraction")?,
        config.get_bool("augment.flip")?,
        config.brightness_spec()?,
        Rng::derive(config.seed()?, "windows").next_u64(),
    )?;
    Ok((store, windows))
}

/// Train the configured variant; the best-validation checkpoint, the
/// loss curve CSV, and the resolved config land in the output directory.
pub fn cmd_train(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    check_dataset_path(config)?;
    let variant = config.variant()?;
    let model_cfg = config.atn_config(variant)?;
    let mut segnet = load_segnet_if_needed(config, model_cfg.enable_segmentation)?;
    let (store, windows) = prepare_windows(config, segnet.as_mut())?;

    let mut train_cfg = config.train_config()?;
    let resume_path = config.get_str("train.resume")?;
    let mut model = if resume_path.is_empty() {
        let mut rng = Rng::derive(config.seed()?, &format!("init-{}", variant.name()));
        let mut model = AtnModel::build(&model_cfg, &mut rng)?;
        if variant == Variant::PretextTransfer || model_cfg.backbone == Backbone::PretextTransfer {
            let path = PathBuf::from(config.get_str("paths.pretext")?);
            if !path.exists() {
                return Err(Error::Usage(format!(
                    "pretext checkpoint {} not found (run `atn pretrain`)",
                    path.display()
                )));
            }
            let ck: Checkpoint<f32> = load_checkpoint(&path, None)?;
            model.load_backbone(&ck.tensors)?;
        }
        model
    } else {
        let (model, ck) = AtnModel::load(Path::new(&resume_path), &mut Rng::new(0))?;
        train_cfg.start_epoch = ck
            .meta_value("epochs_done")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        let lr = ck.meta_value("sched_lr").and_then(|v| v.parse().ok());
        let best = ck.meta_value("sched_best").and_then(|v| v.parse().ok());
        let stale = ck.meta_value("sched_stale").and_then(|v| v.parse().ok());
        if let (Some(lr), Some(best), Some(stale)) = (lr, best, stale) {
            train_cfg.resume_scheduler = Some((lr, best, stale));
        }
        println!("train: resuming from {resume_path} at epoch {}", train_cfg.start_epoch);
        model
    };

    let report = train_policy(&mut model, &store, &windows, &train_cfg, Some(out))?;
    std::fs::write(out.join("loss_curve.csv"), loss_curve_csv(&report))?;
    save_model(&mut model, config, &report, &train_cfg, out)?;
    std::fs::write(
        out.join("provenance.txt"),
        provenance_sidecar(&windows.provenance),
    )?;
    println!(
        "train: {} ({} params), best val RMSE {:.3} deg at epoch {} -> {}",
        variant.name(),
        report.param_count,
        report.best_val_rmse,
        report.best_epoch,
        out.join("model.ckpt").display()
    );
    config.write_resolved(out)?;
    Ok(())
}

fn save_model(
    model: &mut AtnModel,
    config: &RunConfig,
    report: &atn_core::model::train::TrainReport,
    train_cfg: &TrainConfig,
    out: &Path,
) -> Result<()> {
    let (lr, best, stale) = report.final_scheduler_state;
    let adam_steps = 0; // recorded per parameter below via meta
    let _ = adam_steps;
    let epochs_done = train_cfg.start_epoch + report.epochs.len();
    let steps = model
        .params_mut()
        .first()
        .map(|p| p.step_count)
        .unwrap_or(0);
    let meta = vec![
        ("epoch".to_string(), report.best_epoch.to_string()),
        ("epochs_done".to_string(), epochs_done.to_string()),
        ("val_rmse".to_string(), format!("{}", report.best_val_rmse)),
        ("sched_lr".to_string(), format!("{lr}")),
        ("sched_best".to_string(), format!("{best}")),
        ("sched_stale".to_string(), format!("{stale}")),
        ("adam_steps".to_string(), steps.to_string()),
    ];
    model.save(&out.join("model.ckpt"), config.seed()?, &meta)
}

fn load_model(config: &RunConfig) -> Result<AtnModel> {
    let path = PathBuf::from(config.get_str("paths.checkpoint")?);
    if !path.exists() {
        return Err(Error::Usage(format!(
            "model checkpoint {} not found (run `atn train` or set paths.checkpoint)",
            path.display()
        )));
    }
    Ok(AtnModel::load(&path, &mut Rng::new(0))?.0)
}

/// Offline metrics for a checkpoint on the configured dataset split.
pub fn cmd_evaluate(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    check_dataset_path(config)?;
    let mut model = load_model(config)?;
    let mut segnet = load_segnet_if_needed(config, model.config.enable_segmentation)?;
    let (store, windows) = prepare_windows(config, segnet.as_mut())?;
    let split = config.get_str("eval.split")?;
    let episodes: Vec<(usize, usize)> = match split.as_str() {
        "val" => windows.val_episodes.clone(),
        "train" => windows.train_episodes.clone(),
        "all" => store.episodes.clone(),
        other => {
            return Err(Error::Config(format!(
                "eval.split must be train|val|all, got {other:?}"
            )))
        }
    };
    let series = evaluate_series(&mut model, &store, &episodes)?;
    let rmse_v = rmse(&series)?;
    let mce_v = mce(&series)?;
    let failures = offline_failures(&series, &config.failure_scan()?)?;
    let csv = format!(
        "split,frames,rmse_deg,mce_deg,failures,fail_per_10km,distance_km\n{},{},{},{},{},{},{}\n",
        split,
        series.frame_count(),
        rmse_v,
        mce_v,
        failures.count,
        failures.per_10km,
        failures.distance_m / 1000.0
    );
    std::fs::write(out.join("metrics.csv"), &csv)?;
    println!(
        "evaluate[{split}]: RMSE {rmse_v:.3} deg, MCE {mce_v:.3} deg, {} offline failures ({:.2}/10km) over {:.1} km",
        failures.count,
        failures.per_10km,
        failures.distance_m / 1000.0
    );
    config.write_resolved(out)?;
    Ok(())
}

/// Closed-loop rollout of a checkpoint on one generated track.
pub fn cmd_rollout(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let model = load_model(config)?;
    let segnet = load_segnet_if_needed(config, model.config.enable_segmentation)?;
    let theme = Theme::parse(&config.get_str("rollout.theme")?)?;
    let track = generate_track(config.get_u64("rollout.track_seed")?, theme);
    let stride = (config.get_f64("collect.control_hz")? / config.get_f64("collect.sample_hz")?)
        .round()
        .max(1.0) as usize;
    let mut controller = AtnController::new(
        model,
        segnet,
        config.crop_spec()?,
        config.flow_config()?,
        stride,
    )?;
    let rollout_cfg = config.rollout_config()?;
    let log = closed_loop_rollout(&mut controller, &track, &rollout_cfg)?;
    log.write_csv(&out.join("rollout.csv"))?;
    let summary = format!(
        "theme {}\ntrack_seed {}\ndistance_km {}\nfailures {}\nfail_per_10km {}\naborted {}\n",
        theme.name(),
        track.seed,
        log.distance_m / 1000.0,
        log.failure_events.len(),
        log.failures_per_10km(),
        log.aborted.as_deref().unwrap_or("no")
    );
    std::fs::write(out.join("rollout_summary.txt"), &summary)?;
    println!(
        "rollout[{}]: {:.1} km, {} failures ({:.2}/10km){}",
        theme.name(),
        log.distance_m / 1000.0,
        log.failure_events.len(),
        log.failures_per_10km(),
        log.aborted
            .as_deref()
            .map(|a| format!(" ABORTED: {a}"))
            .unwrap_or_default()
    );
    config.write_resolved(out)?;
    Ok(())
}

/// Build the ablation protocol configuration from the run config.
pub fn ablation_config(config: &RunConfig) -> Result<AblationConfig> {
    let variants = config
        .get_str("ablate.variants")?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| Variant::parse(s.trim()))
        .collect::<Result<Vec<_>>>()?;
    let mut collect = config.collect_config()?;
    collect.duration_seconds = config.get_f64("ablate.duration_s")?;
    let mut train = config.train_config()?;
    train.epochs = config.get_usize("ablate.epochs")?;
    let mut pretext = config.pretext_config()?;
    pretext.frames_per_theme = config.get_usize("ablate.pretext_frames_per_theme")?;
    let mut rollout = config.rollout_config()?;
    rollout.distance_km = config.get_f64("ablate.rollout_km")?;
    Ok(AblationConfig {
        variants,
        seeds: config.get_u64_list("ablate.seeds")?,
        collect,
        crop: config.crop_spec()?,
        flow: config.flow_config()?,
        segnet: config.segnet_config()?,
        pretext,
        train,
        base_model: config.atn_config(Variant::Full)?,
        rollout,
        suburb_seed: config.get_u64("ablate.suburb_seed")?,
        mountain_seed: config.get_u64("ablate.mountain_seed")?,
        failure_scan: config.failure_scan()?,
        transfer_threshold_deg: config.get_f64("ablate.transfer_threshold_deg")?,
    })
}

/// Train and evaluate every requested variant over the seed protocol.
pub fn cmd_ablate(config: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let ab = ablation_config(config)?;
    println!(
        "ablate: {} variants x {} seeds, {}s dataset, {} epochs, {} km rollouts",
        ab.variants.len(),
        ab.seeds.len(),
        ab.collect.duration_seconds,
        ab.train.epochs,
        ab.rollout.distance_km
    );
    let report = run_ablation(&ab)?;
    write_report(&report, out)?;
    println!("{}", report_to_text(&report));
    config.write_resolved(out)?;
    Ok(())
}

/// Re-render a report CSV as the aligned text table.
pub fn cmd_report(args: &CliArgs) -> Result<()> {
    let csv_path = args
        .csv_path
        .clone()
        .ok_or_else(|| Error::Usage("report needs --csv <file>".into()))?;
    let text = std::fs::read_to_string(&csv_path)?;
    let report = read_report_csv(&text)?;
    let table = report_to_text(&report);
    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(args.out_dir.join("ablation.txt"), &table)?;
    println!("{table}");
    Ok(())
}
