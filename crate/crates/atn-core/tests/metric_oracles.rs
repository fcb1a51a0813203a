//! Independent brute-force re-evaluation of the offline metrics.
//!
//! The oracles below re-implement the metric formulas directly (flatten,
//! square, sum) with no shared code; the production implementations must
//! agree on randomized series to floating rounding and on the hand-built
//! failure case tables exactly.

use atn_core::metrics::{
    mce, offline_failures, rmse, EpisodeSeries, FailureScanConfig, PredictionSeries,
};
use atn_core::rng::Rng;

fn brute_force_rmse(series: &PredictionSeries) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for ep in &series.episodes {
        for (gt, p) in ep.ground_truth_deg.iter().zip(&ep.predicted_deg) {
            acc += (gt - p) * (gt - p);
            n += 1;
        }
    }
    (acc / n as f64).sqrt()
}

fn brute_force_mce(series: &PredictionSeries) -> f64 {
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for ep in &series.episodes {
        for i in 1..ep.predicted_deg.len() {
            let d = ep.predicted_deg[i] - ep.predicted_deg[i - 1];
            acc += d * d;
            pairs += 1;
        }
    }
    (acc / pairs as f64).sqrt()
}

fn brute_force_failures(series: &PredictionSeries, window: usize, threshold: f64) -> usize {
    let mut count = 0;
    for ep in &series.episodes {
        let deviating: Vec<bool> = ep
            .ground_truth_deg
            .iter()
            .zip(&ep.predicted_deg)
            .map(|(g, p)| (g - p).abs() > threshold)
            .collect();
        let mut i = 0;
        while i + window <= deviating.len() {
            if deviating[i..i + window].iter().all(|&d| d) {
                count += 1;
                i += window; // non-overlapping events
            } else {
                i += 1;
            }
        }
    }
    count
}

fn random_series(rng: &mut Rng) -> PredictionSeries {
    let episodes = 1 + rng.below(4);
    let mut out = PredictionSeries::default();
    for _ in 0..episodes {
        let n = 2 + rng.below(60);
        let gt: Vec<f64> = (0..n).map(|_| rng.uniform(-30.0, 30.0)).collect();
        let pred: Vec<f64> = gt.iter().map(|g| g + rng.uniform(-12.0, 12.0)).collect();
        out.episodes.push(EpisodeSeries {
            ground_truth_deg: gt,
            predicted_deg: pred,
            speed_mps: (0..n).map(|_| rng.uniform(5.0, 25.0)).collect(),
            dt: 0.5,
        });
    }
    out
}

#[test]
fn rmse_and_mce_match_brute_force_on_1000_random_series() {
    let mut rng = Rng::new(2026);
    for i in 0..1000 {
        let series = random_series(&mut rng);
        let a = rmse(&series).unwrap();
        let b = brute_force_rmse(&series);
        assert!(
            (a - b).abs() <= 1e-12 * b.abs().max(1.0),
            "series {i}: rmse {a} vs brute force {b}"
        );
        let a = mce(&series).unwrap();
        let b = brute_force_mce(&series);
        assert!(
            (a - b).abs() <= 1e-12 * b.abs().max(1.0),
            "series {i}: mce {a} vs brute force {b}"
        );
    }
}

#[test]
fn failure_scan_matches_brute_force_on_random_series() {
    let mut rng = Rng::new(9);
    for windows in [3usize, 5, 10] {
        for _ in 0..300 {
            let series = random_series(&mut rng);
            let cfg = FailureScanConfig {
                window: windows,
                threshold_deg: 5.0,
            };
            let got = offline_failures(&series, &cfg).unwrap().count;
            let want = brute_force_failures(&series, windows, 5.0);
            assert_eq!(got, want);
        }
    }
}

#[test]
fn derived_examples_hold() {
    // rmse: gt [0,0,0], pred [3,4,0] -> sqrt(25/3)
    let series = PredictionSeries {
        episodes: vec![EpisodeSeries {
            ground_truth_deg: vec![0.0, 0.0, 0.0],
            predicted_deg: vec![3.0, 4.0, 0.0],
            speed_mps: vec![15.0; 3],
            dt: 0.5,
        }],
    };
    assert!((rmse(&series).unwrap() - (25.0f64 / 3.0).sqrt()).abs() < 1e-12);
    // mce: predictions [0,1,2] -> 1.0
    let series = PredictionSeries {
        episodes: vec![EpisodeSeries {
            ground_truth_deg: vec![0.0; 3],
            predicted_deg: vec![0.0, 1.0, 2.0],
            speed_mps: vec![15.0; 3],
            dt: 0.5,
        }],
    };
    assert_eq!(mce(&series).unwrap(), 1.0);
}

#[test]
fn failure_case_tables_hold() {
    let make = |devs: Vec<f64>| PredictionSeries {
        episodes: vec![EpisodeSeries {
            ground_truth_deg: vec![0.0; devs.len()],
            speed_mps: vec![15.0; devs.len()],
            predicted_deg: devs,
            dt: 0.5,
        }],
    };
    let cfg = FailureScanConfig::default();
    assert_eq!(offline_failures(&make(vec![6.0; 10]), &cfg).unwrap().count, 1);
    let mut nine_then_ok = vec![6.0; 9];
    nine_then_ok.push(0.0);
    assert_eq!(offline_failures(&make(nine_then_ok), &cfg).unwrap().count, 0);
    assert_eq!(offline_failures(&make(vec![6.0; 20]), &cfg).unwrap().count, 2);
}
