//! End-to-end pipeline through the command layer at miniature scale:
//! generate -> pretrain -> train -> evaluate -> rollout, resume
//! continuation, generate determinism, and the overfit sanity oracle.

use std::path::{Path, PathBuf};

use atn_cli::{cmd_evaluate, cmd_generate, cmd_pretrain, cmd_rollout, cmd_train};
use atn_core::config::RunConfig;

fn tiny_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::defaults();
    let sets = [
        ("collect.duration_s", "60".to_string()),
        ("collect.episode_s", "20".to_string()),
        ("collect.track_seeds", "31,32".to_string()),
        ("segnet.frames", "200".to_string()),
        ("segnet.epochs", "4".to_string()),
        ("pretext.frames_per_theme", "40".to_string()),
        ("pretext.epochs", "2".to_string()),
        ("train.epochs", "2".to_string()),
        ("train.val_fraction", "0.34".to_string()),
        ("rollout.distance_km", "0.3".to_string()),
        ("rollout.track_seed", "31".to_string()),
        ("paths.dataset", root.join("dataset/raw").to_str().unwrap().into()),
        ("paths.segnet", root.join("pretrain/segnet.ckpt").to_str().unwrap().into()),
        ("paths.pretext", root.join("pretrain/pretext.ckpt").to_str().unwrap().into()),
        ("paths.checkpoint", root.join("train/model.ckpt").to_str().unwrap().into()),
    ];
    for (k, v) in sets {
        cfg.set(k, &v).unwrap();
    }
    cfg
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("atn-pipe-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn pipeline_runs_end_to_end_and_artifacts_exist() {
    let root = fresh_dir("e2e");
    let cfg = tiny_config(&root);

    cmd_generate(&cfg, &root.join("dataset")).unwrap();
    assert!(root.join("dataset/raw/manifest.txt").exists());
    assert!(root.join("dataset/raw/records.bin").exists());
    assert!(root.join("dataset/augmented/records.bin").exists());
    assert!(root.join("dataset/augmented/provenance.txt").exists());
    assert!(root.join("dataset/resolved.cfg").exists());
    // 60 s at 2 Hz
    let manifest = std::fs::read_to_string(root.join("dataset/raw/manifest.txt")).unwrap();
    assert!(manifest.contains("record_count 120"), "{manifest}");

    cmd_pretrain(&cfg, &root.join("pretrain")).unwrap();
    assert!(root.join("pretrain/segnet.ckpt").exists());
    assert!(root.join("pretrain/pretext.ckpt").exists());

    cmd_train(&cfg, &root.join("train")).unwrap();
    assert!(root.join("train/model.ckpt").exists());
    let curve = std::fs::read_to_string(root.join("train/loss_curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,train_mse,train_rmse,val_mse,val_rmse,learning_rate"));
    // learning-rate column only ever holds the previous value or half it
    let rates: Vec<f64> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').last().unwrap().parse().unwrap())
        .collect();
    for pair in rates.windows(2) {
        assert!(pair[1] == pair[0] || pair[1] == pair[0] * 0.5);
    }

    cmd_evaluate(&cfg, &root.join("eval")).unwrap();
    let metrics = std::fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    assert!(metrics.starts_with("split,frames,rmse_deg,mce_deg"));
    assert!(metrics.lines().nth(1).unwrap().starts_with("val,"));

    cmd_rollout(&cfg, &root.join("roll")).unwrap();
    let rollout = std::fs::read_to_string(root.join("roll/rollout.csv")).unwrap();
    assert!(rollout.starts_with("step,t,x,y,heading,speed,lateral_offset,cmd_deg,expert_deg,failure_flag"));
    assert!(root.join("roll/rollout_summary.txt").exists());
}

#[test]
fn resumed_training_continues_epoch_numbering() {
    let root = fresh_dir("resume");
    let cfg = tiny_config(&root);
    cmd_generate(&cfg, &root.join("dataset")).unwrap();
    cmd_pretrain(&cfg, &root.join("pretrain")).unwrap();
    cmd_train(&cfg, &root.join("train")).unwrap();

    let mut resumed = tiny_config(&root);
    resumed
        .set(
            "train.resume",
            root.join("train/model.ckpt").to_str().unwrap(),
        )
        .unwrap();
    resumed.set("train.epochs", "1").unwrap();
    cmd_train(&resumed, &root.join("train2")).unwrap();
    let curve = std::fs::read_to_string(root.join("train2/loss_curve.csv")).unwrap();
    let first_epoch: usize = curve
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(first_epoch, 2, "resume should continue after epoch 0..=1");
}

#[test]
fn generate_is_byte_deterministic_and_no_augment_skips() {
    let root_a = fresh_dir("det-a");
    let root_b = fresh_dir("det-b");
    let cfg_a = tiny_config(&root_a);
    let cfg_b = tiny_config(&root_b);
    cmd_generate(&cfg_a, &root_a.join("dataset")).unwrap();
    cmd_generate(&cfg_b, &root_b.join("dataset")).unwrap();
    for file in ["raw/records.bin", "raw/manifest.txt", "augmented/records.bin", "augmented/provenance.txt"] {
        let a = std::fs::read(root_a.join("dataset").join(file)).unwrap();
        let b = std::fs::read(root_b.join("dataset").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }

    let root_c = fresh_dir("det-c");
    let mut cfg_c = tiny_config(&root_c);
    cfg_c.set("augment.enable", "false").unwrap();
    cmd_generate(&cfg_c, &root_c.join("dataset")).unwrap();
    assert!(root_c.join("dataset/raw/records.bin").exists());
    assert!(!root_c.join("dataset/augmented").exists());
}

#[test]
fn overfit_oracle_train_split_rmse_below_one_degree() {
    // a model that cannot overfit a few hundred samples is miswired
    let root = fresh_dir("overfit");
    let mut cfg = tiny_config(&root);
    cfg.set("collect.duration_s", "80").unwrap();
    cfg.set("collect.noise_deg", "2").unwrap();
    cfg.set("model.conv_dropout", "0").unwrap();
    cfg.set("model.fc_dropout", "0").unwrap();
    cfg.set("augment.flip", "false").unwrap();
    cfg.set("train.epochs", "50").unwrap();
    cfg.set("train.early_stop_rmse", "0").unwrap();
    cfg.set("eval.split", "train").unwrap();
    cmd_generate(&cfg, &root.join("dataset")).unwrap();
    cmd_pretrain(&cfg, &root.join("pretrain")).unwrap();
    cmd_train(&cfg, &root.join("train")).unwrap();
    cmd_evaluate(&cfg, &root.join("eval")).unwrap();
    let metrics = std::fs::read_to_string(root.join("eval/metrics.csv")).unwrap();
    let rmse: f64 = metrics
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();
    assert!(rmse < 1.0, "train-split RMSE {rmse} deg; overfit check failed");
}

#[test]
fn micro_ablation_emits_exactly_the_requested_rows() {
    let root = fresh_dir("microablate");
    let mut cfg = tiny_config(&root);
    cfg.set("ablate.variants", "baseline_cnn,atn_no_lstm").unwrap();
    cfg.set("ablate.seeds", "5").unwrap();
    cfg.set("ablate.duration_s", "120").unwrap();
    cfg.set("ablate.epochs", "1").unwrap();
    cfg.set("ablate.rollout_km", "0.2").unwrap();
    cfg.set("segnet.epochs", "2").unwrap();
    atn_cli::cmd_ablate(&cfg, &root.join("ablation")).unwrap();
    let csv = std::fs::read_to_string(root.join("ablation/ablation.csv")).unwrap();
    let body: Vec<&str> = csv.lines().skip(1).filter(|l| !l.is_empty()).collect();
    // one row per (variant, seed) plus one mean row per variant
    assert_eq!(body.len(), 4, "{csv}");
    assert!(body[0].starts_with("baseline_cnn,5,"));
    assert!(body[1].starts_with("atn_no_lstm,5,"));
    assert!(body.iter().filter(|l| l.contains(",mean,")).count() == 2);
    assert!(root.join("ablation/ablation.txt").exists());
    // report command round-trips the CSV into the same table
    let report = atn_core::ablation::read_report_csv(&csv).unwrap();
    let table = atn_core::ablation::report_to_text(&report);
    let table_file = std::fs::read_to_string(root.join("ablation/ablation.txt")).unwrap();
    assert_eq!(table, table_file);
}
