//! Property tests over the augmentation pipeline.

use atn_core::augment::{
    augmentation_plan, temporal_subsample, upsample_by_angle, upsample_copies, BrightnessSpec,
};
use atn_core::image::ImageBuf;
use proptest::prelude::*;

proptest! {
    #[test]
    fn flip_is_an_involution_on_random_images(
        h in 1usize..12,
        w in 1usize..12,
        seed in 0u64..1000,
    ) {
        let mut rng = atn_core::rng::Rng::new(seed);
        let mut img = ImageBuf::new(h, w);
        for v in img.data.iter_mut() {
            *v = rng.next_f32();
        }
        prop_assert_eq!(img.flipped_horizontal().flipped_horizontal(), img);
    }

    #[test]
    fn upsampling_multiplies_counts_exactly_and_loses_nothing(
        angles in proptest::collection::vec(-30.0f32..30.0, 0..40),
        seed in 0u64..100,
    ) {
        let plan = upsample_by_angle(&angles, seed);
        let expected: usize = angles.iter().map(|&a| upsample_copies(a)).sum();
        prop_assert_eq!(plan.len(), expected);
        for (i, &angle) in angles.iter().enumerate() {
            let copies = plan.iter().filter(|e| e.source == i).count();
            prop_assert_eq!(copies, upsample_copies(angle));
        }
    }

    #[test]
    fn flip_augmented_steering_histogram_is_symmetric(
        angles in proptest::collection::vec(-40.0f32..40.0, 1..60),
        seed in 0u64..100,
    ) {
        let plan = augmentation_plan(&angles, BrightnessSpec::DEFAULT, true, seed);
        // histogram over the plan's effective steering angles
        let effective: Vec<f32> = plan
            .iter()
            .map(|p| if p.flipped { -angles[p.source_index] } else { angles[p.source_index] })
            .collect();
        let bins = [0.0f32, 2.0, 5.0, 10.0, 20.0, 45.0];
        for pair in bins.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pos = effective.iter().filter(|&&v| v > a && v <= b).count();
            let neg = effective.iter().filter(|&&v| v < -a && v >= -b).count();
            prop_assert_eq!(pos, neg, "bin ({}, {}]", a, b);
        }
    }

    #[test]
    fn subsampled_frames_are_at_least_the_interval_apart(
        base_hz in 4.0f64..30.0,
        target_hz in 0.5f64..5.0,
        n in 2usize..200,
    ) {
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / base_hz).collect();
        let kept = temporal_subsample(&ts, target_hz).unwrap();
        prop_assert!(!kept.is_empty());
        prop_assert_eq!(kept[0], 0);
        for pair in kept.windows(2) {
            let gap = ts[pair[1]] - ts[pair[0]];
            prop_assert!(gap >= 1.0 / target_hz - 1e-9, "gap {}", gap);
        }
    }
}

#[test]
fn plan_brightness_factors_cover_the_configured_range() {
    let angles = vec![0.0f32; 500];
    let plan = augmentation_plan(&angles, BrightnessSpec::DEFAULT, false, 7);
    let lo = plan.iter().map(|p| p.brightness_factor).fold(f32::MAX, f32::min);
    let hi = plan.iter().map(|p| p.brightness_factor).fold(f32::MIN, f32::max);
    assert!(lo >= 0.3 && hi <= 1.7);
    assert!(hi - lo > 1.0, "factors barely vary: {lo}..{hi}");
}
