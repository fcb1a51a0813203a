//! Offline evaluation metrics: RMSE against the expert labels, the mean
//! continuity error of successive predictions, and the 10-consecutive-
//! frame deviation failure count with its per-10km rate.

use crate::error::{Error, Result};

/// One evaluated episode: ground truth and predictions in degrees, plus
/// the per-frame speed and frame spacing for distance accounting.
#[derive(Clone, Debug, Default)]
pub struct EpisodeSeries {
    pub ground_truth_deg: Vec<f64>,
    pub predicted_deg: Vec<f64>,
    pub speed_mps: Vec<f64>,
    /// Seconds between frames.
    pub dt: f64,
}

/// Prediction series over a dataset pass, episode boundaries preserved.
/// MCE and the offline failure scan never cross episode boundaries.
#[derive(Clone, Debug, Default)]
pub struct PredictionSeries {
    pub episodes: Vec<EpisodeSeries>,
}

impl PredictionSeries {
    pub fn frame_count(&self) -> usize {
        self.episodes.iter().map(|e| e.ground_truth_deg.len()).sum()
    }

    pub fn total_distance_m(&self) -> f64 {
        self.episodes
            .iter()
            .map(|e| e.speed_mps.iter().sum::<f64>() * e.dt)
            .sum()
    }
}

/// Root mean square prediction error in degrees:
/// sqrt( (1/|D|) * sum (gt_i - pred_i)^2 ).
pub fn rmse(series: &PredictionSeries) -> Result<f64> {
    let n = series.frame_count();
    if n == 0 {
        return Err(Error::Usage("rmse of an empty series".into()));
    }
    let mut acc = 0.0;
    for ep in &series.episodes {
        if ep.ground_truth_deg.len() != ep.predicted_deg.len() {
            return Err(Error::Usage(
                "episode ground truth and predictions differ in length".into(),
            ));
        }
        for (gt, p) in ep.ground_truth_deg.iter().zip(&ep.predicted_deg) {
            let d = gt - p;
            acc += d * d;
        }
    }
    Ok((acc / n as f64).sqrt())
}

/// Mean continuity error in degrees: the RMS of successive-prediction
/// differences, sqrt( (1/(|D|-1)) * sum (pred_{i+1} - pred_i)^2 ),
/// computed over predictions only, per episode, length-weighted across
/// episodes. Episodes shorter than 2 frames contribute nothing.
pub fn mce(series: &PredictionSeries) -> Result<f64> {
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for ep in &series.episodes {
        let p = &ep.predicted_deg;
        if p.len() < 2 {
            continue;
        }
        for i in 0..p.len() - 1 {
            let d = p[i + 1] - p[i];
            acc += d * d;
        }
        pairs += p.len() - 1;
    }
    if pairs == 0 {
        return Err(Error::Usage(
            "mce needs at least one episode with two or more frames".into(),
        ));
    }
    Ok((acc / pairs as f64).sqrt())
}

#[derive(Clone, Copy, Debug)]
pub struct FailureScanConfig {
    /// Consecutive deviating frames that constitute one failure.
    pub window: usize,
    /// Deviation threshold in degrees.
    pub threshold_deg: f64,
}

impl Default for FailureScanConfig {
    fn default() -> Self {
        FailureScanConfig {
            window: 10,
            threshold_deg: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OfflineFailures {
    pub count: usize,
    pub distance_m: f64,
    pub per_10km: f64,
}

/// Scan each episode for runs of `window` consecutive frames whose
/// |prediction - ground truth| exceeds the threshold. Events are
/// non-overlapping: once a failure fires, the scan restarts at the next
/// frame, so a 2*window-frame violation counts twice. The rate is
/// normalized by the distance implied by the logged speeds.
pub fn offline_failures(
    series: &PredictionSeries,
    config: &FailureScanConfig,
) -> Result<OfflineFailures> {
    if config.window == 0 {
        return Err(Error::Config("failure window must be >= 1".into()));
    }
    let mut count = 0usize;
    for ep in &series.episodes {
        let mut run = 0usize;
        for (gt, p) in ep.ground_truth_deg.iter().zip(&ep.predicted_deg) {
            if (gt - p).abs() > config.threshold_deg {
                run += 1;
                if run == config.window {
                    count += 1;
                    run = 0;
                }
            } else {
                run = 0;
            }
        }
    }
    let distance_m = series.total_distance_m();
    let per_10km = if distance_m > 0.0 {
        count as f64 / (distance_m / 10_000.0)
    } else if count > 0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(OfflineFailures {
        count,
        distance_m,
        per_10km,
    })
}
