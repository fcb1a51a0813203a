//! Acceptance suite: one pass/fail line per criterion.
//!
//! Absolute error levels depend on environment scale, so acceptance is
//! property- and ordering-based: gradient correctness, metric-oracle
//! equivalence, the expert baseline, full-scale learnability with a
//! closed-loop run, ablation orderings over three seeds, LSTM stability,
//! augmentation properties, the cross-theme generalization gap, and
//! byte-level determinism.
//!
//! Run with `cargo test -p atn-cli --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use atn_cli::{ablation_config, cmd_generate, cmd_pretrain, cmd_train};
use atn_core::ablation::{report_to_csv, run_ablation, AblationReport};
use atn_core::augment::{augmentation_plan, upsample_copies, BrightnessSpec, CropSpec};
use atn_core::config::RunConfig;
use atn_core::error::Result;
use atn_core::image::{ImageBuf, SegMap};
use atn_core::metrics::{
    mce, offline_failures, rmse, EpisodeSeries, FailureScanConfig, PredictionSeries,
};
use atn_core::model::config::{AtnConfig, Variant};
use atn_core::model::controller::AtnController;
use atn_core::model::features::{build_frame_store, build_window_dataset, evaluate_series};
use atn_core::model::net::AtnModel;
use atn_core::model::train::{train_policy, TrainConfig};
use atn_core::rng::Rng;
use atn_core::sim::dataset::{collect_demonstrations, CollectConfig};
use atn_core::sim::dynamics::{step_dynamics, turn_radius, DynamicsConfig};
use atn_core::sim::expert::PurePursuit;
use atn_core::sim::rollout::{closed_loop_rollout, ExpertController, RolloutConfig};
use atn_core::sim::track::{generate_track, Theme};
use atn_core::sim::types::VehicleState;
use atn_core::tensor::gradcheck::layer_gradient_sweep;
use atn_core::vision::flow::FlowConfig;
use atn_core::vision::segnet::{train_segmentation, SegTrainConfig};

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn record(results: &mut Vec<Outcome>, name: &'static str, run: impl FnOnce() -> Result<(bool, String)>) {
    let start = Instant::now();
    let (passed, detail) = match run() {
        Ok(pair) => pair,
        Err(e) => (false, format!("errored: {e}")),
    };
    let line = format!(
        "criterion {name}: {} [{:.0?}] {detail}",
        if passed { "PASS" } else { "FAIL" },
        start.elapsed()
    );
    println!("{line}");
    results.push(Outcome { name, passed, detail });
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("atn-acceptance-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

// ---------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------
fn gradient_correctness() -> Result<(bool, String)> {
    let started = Instant::now();
    let entries = layer_gradient_sweep(2024)?;
    let worst = entries.iter().cloned().fold((String::new(), 0.0f64), |acc, e| {
        if e.error > acc.1 {
            (e.name, e.error)
        } else {
            acc
        }
    });
    let all_pass = entries.iter().all(|e| e.error < 1e-4);
    let in_time = started.elapsed().as_secs_f64() < 60.0;
    Ok((
        entries.len() >= 20 && all_pass && in_time,
        format!(
            "{} layer cases, worst rel err {:.2e} ({}), {:.2}s",
            entries.len(),
            worst.1,
            worst.0,
            started.elapsed().as_secs_f64()
        ),
    ))
}

// ---------------------------------------------------------------------
// criterion 2: metric oracle equivalence
// ---------------------------------------------------------------------
fn metric_oracles() -> Result<(bool, String)> {
    fn brute_rmse(s: &PredictionSeries) -> f64 {
        let mut acc = 0.0;
        let mut n = 0;
        for ep in &s.episodes {
            for (g, p) in ep.ground_truth_deg.iter().zip(&ep.predicted_deg) {
                acc += (g - p) * (g - p);
                n += 1;
            }
        }
        (acc / n as f64).sqrt()
    }
    fn brute_mce(s: &PredictionSeries) -> f64 {
        let mut acc = 0.0;
        let mut n = 0;
        for ep in &s.episodes {
            for w in ep.predicted_deg.windows(2) {
                acc += (w[1] - w[0]) * (w[1] - w[0]);
                n += 1;
            }
        }
        (acc / n as f64).sqrt()
    }
    let mut rng = Rng::new(77);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let mut series = PredictionSeries::default();
        for _ in 0..1 + rng.below(3) {
            let n = 2 + rng.below(50);
            let gt: Vec<f64> = (0..n).map(|_| rng.uniform(-30.0, 30.0)).collect();
            let pred: Vec<f64> = gt.iter().map(|g| g + rng.uniform(-10.0, 10.0)).collect();
            series.episodes.push(EpisodeSeries {
                ground_truth_deg: gt,
                predicted_deg: pred,
                speed_mps: vec![15.0; n],
                dt: 0.5,
            });
        }
        let dr = (rmse(&series)? - brute_rmse(&series)).abs();
        let dm = (mce(&series)? - brute_mce(&series)).abs();
        worst = worst.max(dr).max(dm);
    }
    // derived examples and failure case tables
    let ex = PredictionSeries {
        episodes: vec![EpisodeSeries {
            ground_truth_deg: vec![0.0, 0.0, 0.0],
            predicted_deg: vec![3.0, 4.0, 0.0],
            speed_mps: vec![15.0; 3],
            dt: 0.5,
        }],
    };
    let rmse_ok = (rmse(&ex)? - (25.0f64 / 3.0).sqrt()).abs() < 1e-12;
    let make = |devs: Vec<f64>| PredictionSeries {
        episodes: vec![EpisodeSeries {
            ground_truth_deg: vec![0.0; devs.len()],
            speed_mps: vec![15.0; devs.len()],
            predicted_deg: devs,
            dt: 0.5,
        }],
    };
    let cfg = FailureScanConfig::default();
    let mut nine = vec![6.0; 9];
    nine.push(0.0);
    let cases_ok = offline_failures(&make(vec![6.0; 10]), &cfg)?.count == 1
        && offline_failures(&make(nine), &cfg)?.count == 0
        && offline_failures(&make(vec![6.0; 20]), &cfg)?.count == 2;
    Ok((
        worst <= 1e-12 && rmse_ok && cases_ok,
        format!("1000 random series, worst |impl - brute force| {worst:.2e}; case tables {cases_ok}"),
    ))
}

// ---------------------------------------------------------------------
// criterion 3: expert baseline
// ---------------------------------------------------------------------
fn expert_baseline() -> Result<(bool, String)> {
    let mut detail = String::new();
    let mut ok = true;
    for theme in Theme::ALL {
        let track = generate_track(17, theme);
        let mut expert = ExpertController {
            pursuit: PurePursuit::default(),
        };
        let cfg = RolloutConfig {
            distance_km: 10.0,
            ..RolloutConfig::default()
        };
        let log = closed_loop_rollout(&mut expert, &track, &cfg)?;
        let failures = log.failure_events.len();
        ok &= failures == 0 && log.distance_m >= 10_000.0;
        detail.push_str(&format!("{}: {failures} violations/10km; ", theme.name()));
    }
    // bicycle circle closure
    let dyn_cfg = DynamicsConfig::default();
    let delta = 14.0;
    let v = 2.0;
    let r = turn_radius(delta, dyn_cfg.wheelbase);
    let steps = (2.0 * std::f64::consts::PI * r / (v * 0.01)).round() as usize;
    let mut state = VehicleState::at(0.0, 0.0, 0.0, v);
    for _ in 0..steps {
        state = step_dynamics(&state, delta, 0.0, 0.01, &dyn_cfg);
    }
    let closure = (state.x * state.x + state.y * state.y).sqrt() / r;
    ok &= closure < 0.01;
    detail.push_str(&format!("circle closure {:.3}% of radius", closure * 100.0));
    Ok((ok, detail))
}

// ---------------------------------------------------------------------
// criterion 4: learnability at the two-hour scale
// ---------------------------------------------------------------------
fn learnability() -> Result<(bool, String)> {
    let crop = CropSpec {
        top_fraction: 0.25,
        bottom_fraction: 0.125,
    };
    let collect = CollectConfig {
        duration_seconds: 7200.0,
        ..CollectConfig::default()
    };
    let collected = collect_demonstrations(&collect)?;
    let dataset = collected.dataset;
    let record_count = dataset.record_count();

    let seg_frames: Vec<(ImageBuf, SegMap)> = dataset
        .records
        .iter()
        .step_by((record_count / 400).max(1))
        .take(400)
        .map(|r| {
            Ok((
                r.image_buf(64, 64).crop_rows(16, 40)?,
                r.seg_map(64, 64).crop_rows(16, 40)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (mut segnet, seg_report) = train_segmentation(
        &seg_frames,
        &SegTrainConfig {
            epochs: 8,
            ..SegTrainConfig::default()
        },
    )?;
    let seg_ok = seg_report.val_pixel_accuracy >= 0.90;

    let store = build_frame_store(
        &dataset,
        Some(&mut segnet),
        &crop,
        &FlowConfig::default(),
        48,
        8.0,
        atn_core::model::features::FlowSource::PrevImages(&collected.prev_images),
    )?;
    let windows = build_window_dataset(&store, 0.1, true, BrightnessSpec::DEFAULT, 42)?;
    let cfg = AtnConfig::for_variant(Variant::Full);
    let mut model = AtnModel::build(&cfg, &mut Rng::new(1))?;
    let tc = TrainConfig {
        epochs: 8,
        early_stop_val_rmse: Some(2.0),
        ..TrainConfig::default()
    };
    let report = train_policy(&mut model, &store, &windows, &tc, None)?;
    let val = evaluate_series(&mut model, &store, &windows.val_episodes)?;
    let val_rmse = rmse(&val)?;

    // mirror consistency on held-out windows
    let mut asym_sum = 0.0;
    let mut asym_n = 0usize;
    for &(start, count) in windows.val_episodes.iter().take(4) {
        for t in (0..count).step_by(5) {
            let sample = atn_core::model::features::TrainSample {
                last_index: start + t,
                episode_start: start,
                flipped: false,
                brightness_factor: 1.0,
            };
            let flipped = atn_core::model::features::TrainSample {
                flipped: true,
                ..sample
            };
            let (x, kin, _) = atn_core::model::features::assemble_batch(&store, &[sample], &cfg)?;
            let p = model.forward_batch(&x, &kin, false, &mut Rng::new(0))?.data()[0];
            let (xf, kinf, _) =
                atn_core::model::features::assemble_batch(&store, &[flipped], &cfg)?;
            let pf = model.forward_batch(&xf, &kinf, false, &mut Rng::new(0))?.data()[0];
            asym_sum += (p + pf).abs() as f64;
            asym_n += 1;
        }
    }
    let asym = asym_sum / asym_n.max(1) as f64;

    let track = generate_track(collect.track_seeds[0], Theme::Desert);
    let mut controller = AtnController::new(model, Some(segnet), crop, FlowConfig::default(), 5)?;
    let rollout_cfg = RolloutConfig {
        distance_km: 10.0,
        ..RolloutConfig::default()
    };
    let log = closed_loop_rollout(&mut controller, &track, &rollout_cfg)?;
    let failures = log.failure_events.len() + usize::from(log.aborted.is_some());

    let count_ok = (13_000..=16_000).contains(&record_count);
    let pass = count_ok && seg_ok && val_rmse <= 5.0 && failures <= 1 && asym <= 2.0;
    Ok((
        pass,
        format!(
            "{record_count} records, segnet acc {:.3}, held-out RMSE {:.3} deg (epochs {}), mirror asymmetry {:.2} deg, 10 km failures {failures}",
            seg_report.val_pixel_accuracy,
            val_rmse,
            report.epochs.len(),
            asym
        ),
    ))
}

// ---------------------------------------------------------------------
// shared ablation run for criteria 5, 6, 8
// ---------------------------------------------------------------------
fn acceptance_ablation() -> Result<AblationReport> {
    let mut cfg = RunConfig::defaults();
    cfg.set(
        "ablate.variants",
        "baseline_cnn,atn_full,atn_no_segmentation,atn_no_flow,atn_no_lstm,atn_transfer",
    )?;
    cfg.set("ablate.seeds", "1,2,3")?;
    cfg.set("ablate.duration_s", "600")?;
    cfg.set("ablate.epochs", "6")?;
    cfg.set("ablate.rollout_km", "2")?;
    cfg.set("ablate.pretext_frames_per_theme", "300")?;
    cfg.set("pretext.epochs", "6")?;
    cfg.set("segnet.epochs", "6")?;
    let ab = ablation_config(&cfg)?;
    run_ablation(&ab)
}

fn mean(report: &AblationReport, variant: Variant, metric: impl Fn(&atn_core::ablation::VariantResult) -> f64) -> f64 {
    let rows: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.variant == variant.name() && r.status == "ok")
        .map(|r| metric(r))
        .collect();
    rows.iter().sum::<f64>() / rows.len().max(1) as f64
}

fn ablation_direction(report: &AblationReport) -> (bool, String) {
    let full = mean(report, Variant::Full, |r| r.rmse_test);
    let no_flow = mean(report, Variant::WithoutFlow, |r| r.rmse_test);
    let no_seg = mean(report, Variant::WithoutSegmentation, |r| r.rmse_test);
    let baseline = mean(report, Variant::BaselineCnn, |r| r.rmse_test);
    let ordering = full < no_flow && no_flow < no_seg && full < baseline;
    // per-seed: full beats the baseline in at least 2 of 3 seeds
    let mut per_seed_wins = 0;
    for seed in [1u64, 2, 3] {
        let f = report
            .rows
            .iter()
            .find(|r| r.variant == Variant::Full.name() && r.seed == seed);
        let b = report
            .rows
            .iter()
            .find(|r| r.variant == Variant::BaselineCnn.name() && r.seed == seed);
        if let (Some(f), Some(b)) = (f, b) {
            if f.rmse_test < b.rmse_test {
                per_seed_wins += 1;
            }
        }
    }
    let transfer_epochs = mean(report, Variant::PretextTransfer, |r| r.epochs_to_threshold as f64);
    let scratch_epochs = mean(report, Variant::Full, |r| r.epochs_to_threshold as f64);
    let transfer_ok = transfer_epochs <= scratch_epochs;
    let pass = ordering && per_seed_wins >= 2 && transfer_ok;
    (
        pass,
        format!(
            "mean test RMSE: full {full:.3} < no_flow {no_flow:.3} < no_seg {no_seg:.3}; baseline {baseline:.3}; per-seed wins {per_seed_wins}/3; epochs-to-{:.1}deg transfer {transfer_epochs:.1} vs scratch {scratch_epochs:.1}",
            2.5
        ),
    )
}

fn stability_direction(report: &AblationReport) -> (bool, String) {
    let with_lstm = mean(report, Variant::Full, |r| r.mce_test);
    let without = mean(report, Variant::WithoutLstm, |r| r.mce_test);
    (
        with_lstm < without,
        format!("mean held-out MCE: with LSTM {with_lstm:.3} deg < without {without:.3} deg"),
    )
}

fn generalization_gap(report: &AblationReport) -> (bool, String) {
    let mut ok = true;
    let mut detail = String::new();
    for variant in [
        Variant::BaselineCnn,
        Variant::Full,
        Variant::WithoutSegmentation,
        Variant::WithoutFlow,
        Variant::WithoutLstm,
        Variant::PretextTransfer,
    ] {
        let theme_mean = |theme: &str| {
            mean(report, variant, |r| {
                r.fail_per_10km.get(theme).copied().unwrap_or(f64::NAN)
            })
        };
        let desert = theme_mean("desert");
        let suburb = theme_mean("suburb");
        let mountain = theme_mean("mountain");
        let holds = suburb >= desert - 1e-9 && mountain >= desert - 1e-9;
        ok &= holds;
        detail.push_str(&format!(
            "{}: {:.2}/{:.2}/{:.2}{} ",
            variant.name(),
            desert,
            suburb,
            mountain,
            if holds { "" } else { " VIOLATED" }
        ));
    }
    (ok, detail)
}

// ---------------------------------------------------------------------
// criterion 7: augmentation properties
// ---------------------------------------------------------------------
fn augmentation_properties() -> Result<(bool, String)> {
    // flip involution, exact on every field
    let mut rng = Rng::new(5);
    let mut img = ImageBuf::new(10, 12);
    for v in img.data.iter_mut() {
        *v = rng.next_f32();
    }
    let involution_ok = img.flipped_horizontal().flipped_horizontal() == img;

    // histogram symmetry of the flip-augmented plan
    let angles: Vec<f32> = (0..400).map(|_| rng.uniform(-40.0, 40.0) as f32).collect();
    let plan = augmentation_plan(&angles, BrightnessSpec::DEFAULT, true, 11);
    let eff: Vec<f32> = plan
        .iter()
        .map(|p| {
            if p.flipped {
                -angles[p.source_index]
            } else {
                angles[p.source_index]
            }
        })
        .collect();
    let mut hist_ok = true;
    for pair in [0.0f32, 2.0, 5.0, 10.0, 20.0, 45.0].windows(2) {
        let pos = eff.iter().filter(|&&v| v > pair[0] && v <= pair[1]).count();
        let neg = eff.iter().filter(|&&v| v < -pair[0] && v >= -pair[1]).count();
        hist_ok &= pos == neg;
    }

    let counts_ok =
        upsample_copies(12.0) == 10 && upsample_copies(7.0) == 5 && upsample_copies(3.0) == 1;
    Ok((
        involution_ok && hist_ok && counts_ok,
        format!("involution {involution_ok}, histogram symmetric {hist_ok}, upsample 10x/5x/1x {counts_ok}"),
    ))
}

// ---------------------------------------------------------------------
// criterion 9: determinism
// ---------------------------------------------------------------------
fn determinism() -> Result<(bool, String)> {
    let tiny = |root: &Path| -> Result<RunConfig> {
        let mut cfg = RunConfig::defaults();
        cfg.set("collect.duration_s", "60")?;
        cfg.set("collect.episode_s", "20")?;
        cfg.set("collect.track_seeds", "51,52")?;
        cfg.set("segnet.frames", "200")?;
        cfg.set("segnet.epochs", "3")?;
        cfg.set("pretext.frames_per_theme", "30")?;
        cfg.set("pretext.epochs", "1")?;
        cfg.set("train.epochs", "2")?;
        cfg.set("train.val_fraction", "0.34")?;
        cfg.set("paths.dataset", root.join("dataset/raw").to_str().unwrap())?;
        cfg.set("paths.segnet", root.join("pretrain/segnet.ckpt").to_str().unwrap())?;
        cfg.set("paths.pretext", root.join("pretrain/pretext.ckpt").to_str().unwrap())?;
        Ok(cfg)
    };
    let run_once = |tag: &str| -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
        let root = fresh_dir(tag);
        let cfg = tiny(&root)?;
        cmd_generate(&cfg, &root.join("dataset"))?;
        cmd_pretrain(&cfg, &root.join("pretrain"))?;
        cmd_train(&cfg, &root.join("train"))?;
        Ok((
            std::fs::read(root.join("dataset/raw/records.bin"))?,
            std::fs::read(root.join("dataset/augmented/records.bin"))?,
            std::fs::read(root.join("train/model.ckpt"))?,
        ))
    };
    let a = run_once("det-a")?;
    let b = run_once("det-b")?;
    let datasets_ok = a.0 == b.0 && a.1 == b.1;
    let checkpoints_ok = a.2 == b.2;

    // report CSV determinism through a micro ablation run
    let micro = |_tag: &str| -> Result<String> {
        let mut cfg = RunConfig::defaults();
        cfg.set("ablate.variants", "baseline_cnn")?;
        cfg.set("ablate.seeds", "9")?;
        cfg.set("ablate.duration_s", "120")?;
        cfg.set("ablate.epochs", "1")?;
        cfg.set("ablate.rollout_km", "0.3")?;
        cfg.set("segnet.epochs", "2")?;
        let ab = ablation_config(&cfg)?;
        Ok(report_to_csv(&run_ablation(&ab)?))
    };
    let reports_ok = micro("a")? == micro("b")?;
    Ok((
        datasets_ok && checkpoints_ok && reports_ok,
        format!("datasets byte-identical {datasets_ok}, checkpoints byte-identical {checkpoints_ok}, report CSVs identical {reports_ok}"),
    ))
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    record(&mut results, "1 gradient correctness", gradient_correctness);
    record(&mut results, "2 metric oracle equivalence", metric_oracles);
    record(&mut results, "3 expert baseline", expert_baseline);
    record(&mut results, "4 learnability", learnability);

    // one shared protocol run for criteria 5, 6, 8
    let ablation = match acceptance_ablation() {
        Ok(report) => Some(report),
        Err(e) => {
            println!("ablation protocol errored: {e}");
            None
        }
    };
    match &ablation {
        Some(report) => {
            let (p5, d5) = ablation_direction(report);
            println!("criterion 5 ablation direction: {} {d5}", if p5 { "PASS" } else { "FAIL" });
            results.push(Outcome { name: "5 ablation direction", passed: p5, detail: d5 });
            let (p6, d6) = stability_direction(report);
            println!("criterion 6 stability direction: {} {d6}", if p6 { "PASS" } else { "FAIL" });
            results.push(Outcome { name: "6 stability direction", passed: p6, detail: d6 });
            record(&mut results, "7 augmentation properties", augmentation_properties);
            let (p8, d8) = generalization_gap(report);
            println!("criterion 8 generalization gap: {} {d8}", if p8 { "PASS" } else { "FAIL" });
            results.push(Outcome { name: "8 generalization gap", passed: p8, detail: d8 });
        }
        None => {
            for name in ["5 ablation direction", "6 stability direction", "8 generalization gap"] {
                results.push(Outcome { name: Box::leak(name.to_string().into_boxed_str()), passed: false, detail: "ablation run errored".into() });
            }
            record(&mut results, "7 augmentation properties", augmentation_properties);
        }
    }
    record(&mut results, "9 determinism", determinism);

    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("criterion {}: {}", r.name, r.detail))
        .collect();
    println!("\nacceptance summary: {}/{} criteria passed", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
