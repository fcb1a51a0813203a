//! Policy training: MSE on the steering angle in degrees, Adam with the
//! halving-on-plateau schedule, best-validation checkpoint retention,
//! and an optional early stop on validation RMSE.

use std::path::Path;

use super::features::{assemble_batch, evaluate_series, FrameStore, WindowDataset};
use super::net::AtnModel;
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::rng::Rng;
use crate::tensor::loss::mse_loss;
use crate::tensor::optim::{adam_step, OptimizerConfig, PlateauScheduler};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Stop once held-out RMSE reaches this many degrees.
    pub early_stop_val_rmse: Option<f64>,
    pub seed: u64,
    /// Epoch numbering starts here (resumed runs continue counting).
    pub start_epoch: usize,
    /// Scheduler state carried over on resume: (learning_rate, best
    /// loss, stale epochs).
    pub resume_scheduler: Option<(f64, f64, usize)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            early_stop_val_rmse: None,
            seed: 42,
            start_epoch: 0,
            resume_scheduler: None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub train_rmse: f64,
    pub val_mse: f64,
    pub val_rmse: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub param_count: usize,
    pub final_scheduler_state: (f64, f64, usize),
}

/// Train `model` on the balanced window plan; on return the model holds
/// the best-validation parameters. A NaN validation loss aborts after
/// dumping the last good model to `dump_dir/last_good.ckpt` when a dump
/// directory is given.
pub fn train_policy(
    model: &mut AtnModel,
    store: &FrameStore,
    windows: &WindowDataset,
    config: &TrainConfig,
    dump_dir: Option<&Path>,
) -> Result<TrainReport> {
    config.optimizer.validate()?;
    if windows.train_samples.is_empty() {
        return Err(Error::Usage("no training samples".into()));
    }
    if windows.val_episodes.is_empty() {
        return Err(Error::Usage("no validation episodes".into()));
    }
    let mut scheduler = PlateauScheduler::new(&config.optimizer);
    if let Some((lr, best, stale)) = config.resume_scheduler {
        scheduler.restore(lr, best, stale);
    }
    let param_count = model.param_count();
    let mut best_model = model.clone();
    let mut best_val_rmse = f64::INFINITY;
    let mut best_epoch = config.start_epoch;
    let mut stats = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..windows.train_samples.len()).collect();

    for e in 0..config.epochs {
        let epoch = config.start_epoch + e;
        let lr = scheduler.learning_rate();
        let mut shuffle_rng = Rng::derive(config.seed, &format!("epoch-order-{epoch}"));
        shuffle_rng.shuffle(&mut order);
        let mut dropout_rng = Rng::derive(config.seed, &format!("epoch-dropout-{epoch}"));
        let mut total = 0.0f64;
        let mut seen = 0usize;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue; // batchnorm wants at least two samples
            }
            let samples: Vec<_> = chunk.iter().map(|&i| windows.train_samples[i]).collect();
            let (x, kin, targets) = assemble_batch(store, &samples, &model.config)?;
            let preds = model.forward_batch(&x, &kin, true, &mut dropout_rng)?;
            let (loss, grad) = mse_loss(&preds, &targets)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            model.backward(&grad)?;
            adam_step(&mut model.params_mut(), &config.optimizer, lr)?;
            total += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let train_mse = total / seen.max(1) as f64;

        let val_series = evaluate_series(model, store, &windows.val_episodes)?;
        let val_rmse = rmse(&val_series)?;
        let val_mse = val_rmse * val_rmse;
        if !val_mse.is_finite() {
            if let Some(dir) = dump_dir {
                std::fs::create_dir_all(dir)?;
                best_model.save(&dir.join("last_good.ckpt"), config.seed, &[(
                    "epoch".into(),
                    best_epoch.to_string(),
                )])?;
            }
            return Err(Error::NonFinite(format!(
                "validation loss at epoch {epoch}; last good checkpoint dumped"
            )));
        }
        stats.push(EpochStats {
            epoch,
            train_mse,
            train_rmse: train_mse.sqrt(),
            val_mse,
            val_rmse,
            learning_rate: lr,
        });
        if val_rmse < best_val_rmse {
            best_val_rmse = val_rmse;
            best_epoch = epoch;
            best_model = model.clone();
        }
        scheduler.observe(val_mse);
        if let Some(stop) = config.early_stop_val_rmse {
            if val_rmse <= stop {
                break;
            }
        }
    }
    *model = best_model;
    Ok(TrainReport {
        epochs: stats,
        best_epoch,
        best_val_rmse,
        param_count,
        final_scheduler_state: scheduler.state(),
    })
}

/// Per-epoch loss-curve CSV (epoch, train/val loss, learning rate).
pub fn loss_curve_csv(report: &TrainReport) -> String {
    let mut out = String::from("epoch,train_mse,train_rmse,val_mse,val_rmse,learning_rate\n");
    for s in &report.epochs {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.epoch, s.train_mse, s.train_rmse, s.val_mse, s.val_rmse, s.learning_rate
        ));
    }
    out
}
