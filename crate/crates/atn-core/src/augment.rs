//! Preprocessing and augmentation: cropping, HSV brightness jitter,
//! horizontal flipping, steering-angle upsampling, and temporal
//! subsampling. Everything is a pure function of its inputs plus a seed,
//! so a rerun rebuilds the identical dataset.

use crate::error::{Error, Result};
use crate::image::{hsv_to_rgb, rgb_to_hsv, ImageBuf};
use crate::rng::Rng;

/// Crop fractions removed from the top and bottom of each frame.
#[derive(Clone, Copy, Debug)]
pub struct CropSpec {
    pub top_fraction: f64,
    pub bottom_fraction: f64,
}

impl CropSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("top_fraction", self.top_fraction),
            ("bottom_fraction", self.bottom_fraction),
        ] {
            if !(0.0..0.5).contains(&f) {
                return Err(Error::Config(format!(
                    "crop {name} must lie in [0, 0.5), got {f}"
                )));
            }
        }
        if self.top_fraction + self.bottom_fraction >= 1.0 {
            return Err(Error::Config("crop fractions must sum below 1".into()));
        }
        Ok(())
    }

    /// Rows removed from the top.
    pub fn top_rows(&self, height: usize) -> usize {
        (height as f64 * self.top_fraction) as usize
    }

    /// Output height: floor(height * (1 - top - bottom)).
    pub fn cropped_height(&self, height: usize) -> usize {
        (height as f64 * (1.0 - self.top_fraction - self.bottom_fraction)) as usize
    }
}

/// Remove the top and bottom bands of an image; width is unchanged and
/// output row r equals input row r + top_rows.
pub fn crop(image: &ImageBuf, spec: &CropSpec) -> Result<ImageBuf> {
    spec.validate()?;
    image.crop_rows(spec.top_rows(image.height), spec.cropped_height(image.height))
}

/// Scale the HSV value channel by `factor` (clamped to [0, 1]); hue and
/// saturation are untouched.
pub fn brightness(image: &ImageBuf, factor: f64) -> Result<ImageBuf> {
    if factor <= 0.0 {
        return Err(Error::Config(format!(
            "brightness factor must be positive, got {factor}"
        )));
    }
    let mut out = ImageBuf::new(image.height, image.width);
    for i in 0..image.height * image.width {
        let px = [
            image.data[i * 3],
            image.data[i * 3 + 1],
            image.data[i * 3 + 2],
        ];
        let mut hsv = rgb_to_hsv(px);
        hsv[2] = (hsv[2] * factor).clamp(0.0, 1.0);
        let rgb = hsv_to_rgb(hsv);
        out.data[i * 3] = rgb[0];
        out.data[i * 3 + 1] = rgb[1];
        out.data[i * 3 + 2] = rgb[2];
    }
    Ok(out)
}

/// Brightness factor range; the literal-range switch reproduces the
/// stated 0..10 multiplier (clamping does the rest) instead of the
/// trainability-preserving default.
#[derive(Clone, Copy, Debug)]
pub struct BrightnessSpec {
    pub low: f64,
    pub high: f64,
}

impl BrightnessSpec {
    pub const DEFAULT: BrightnessSpec = BrightnessSpec {
        low: 0.3,
        high: 1.7,
    };
    pub const LITERAL: BrightnessSpec = BrightnessSpec {
        low: f64::MIN_POSITIVE,
        high: 10.0,
    };

    pub fn sample(&self, rng: &mut Rng) -> f64 {
        rng.uniform(self.low, self.high)
    }
}

/// Duplication count for one steering angle: >10 deg tenfold, >5 deg
/// fivefold, straight-driving frames kept once. Thresholds compare the
/// absolute angle.
pub fn upsample_copies(steering_deg: f32) -> usize {
    let a = steering_deg.abs();
    if a > 10.0 {
        10
    } else if a > 5.0 {
        5
    } else {
        1
    }
}

/// Expand a sample list by the per-angle duplication rule, then shuffle
/// with the supplied seed. Returns indices into the input list.
pub fn upsample_by_angle(steering_deg: &[f32], seed: u64) -> Vec<UpsampleEntry> {
    let mut out = Vec::new();
    for (i, &angle) in steering_deg.iter().enumerate() {
        for copy in 0..upsample_copies(angle) {
            out.push(UpsampleEntry {
                source: i,
                copy_index: copy,
            });
        }
    }
    let mut rng = Rng::derive(seed, "upsample-shuffle");
    rng.shuffle(&mut out);
    out
}

/// One duplicated sample: which source record it came from and which of
/// its copies this is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpsampleEntry {
    pub source: usize,
    pub copy_index: usize,
}

/// Greedy temporal subsampling: keep a record when at least 1/target_hz
/// seconds have elapsed since the last kept record, starting from the
/// first. Returns kept indices.
pub fn temporal_subsample(timestamps: &[f64], target_hz: f64) -> Result<Vec<usize>> {
    if target_hz <= 0.0 {
        return Err(Error::Config(format!(
            "target_hz must be positive, got {target_hz}"
        )));
    }
    let interval = 1.0 / target_hz - 1e-9;
    let mut kept = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (i, &t) in timestamps.iter().enumerate() {
        if t - last >= interval {
            kept.push(i);
            last = t;
        }
    }
    Ok(kept)
}

/// Transformation flags that fully determine how a training sample was
/// derived from its source record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Provenance {
    pub source_index: usize,
    pub flipped: bool,
    pub brightness_factor: f32,
    pub copy_index: usize,
}

impl Provenance {
    pub fn sidecar_line(&self) -> String {
        format!(
            "{} {} {} {}",
            self.source_index,
            if self.flipped { 1 } else { 0 },
            self.brightness_factor,
            self.copy_index
        )
    }

    pub fn parse_sidecar_line(line: &str) -> Result<Provenance> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(Error::Format(format!("bad provenance line {line:?}")));
        }
        Ok(Provenance {
            source_index: parts[0]
                .parse()
                .map_err(|_| Error::Format(format!("bad source index in {line:?}")))?,
            flipped: parts[1] == "1",
            brightness_factor: parts[2]
                .parse()
                .map_err(|_| Error::Format(format!("bad brightness factor in {line:?}")))?,
            copy_index: parts[3]
                .parse()
                .map_err(|_| Error::Format(format!("bad copy index in {line:?}")))?,
        })
    }
}

/// Build the balanced sample plan for a recorded dataset:
/// originals plus their mirrors, each duplicated by the steering-angle
/// rule, each copy assigned a brightness factor, then shuffled.
///
/// `steering_deg` is indexed by source record. The returned provenance
/// list is the whole plan; materializing pixels happens elsewhere.
pub fn augmentation_plan(
    steering_deg: &[f32],
    brightness: BrightnessSpec,
    flip: bool,
    seed: u64,
) -> Vec<Provenance> {
    // flip stage: every record plus its mirror
    let mut pool: Vec<(usize, bool, f32)> = Vec::with_capacity(steering_deg.len() * 2);
    for (i, &angle) in steering_deg.iter().enumerate() {
        pool.push((i, false, angle));
        if flip {
            pool.push((i, true, -angle));
        }
    }
    // upsample stage keyed on the (possibly negated) angle
    let mut plan = Vec::new();
    for &(source, flipped, angle) in &pool {
        for copy in 0..upsample_copies(angle) {
            plan.push(Provenance {
                source_index: source,
                flipped,
                brightness_factor: 1.0,
                copy_index: copy,
            });
        }
    }
    // brightness after duplication so copies differ
    let mut brng = Rng::derive(seed, "brightness");
    for p in plan.iter_mut() {
        p.brightness_factor = brightness.sample(&mut brng) as f32;
    }
    let mut srng = Rng::derive(seed, "plan-shuffle");
    srng.shuffle(&mut plan);
    plan
}

/// Materialize the balanced training set as an on-disk dataset in the
/// recorded-driving format (cropped resolution, shuffled, no episode
/// structure) plus its provenance plan. Ground-truth seg maps are
/// carried through (cropped and mirrored with their samples).
pub fn materialize_augmented_dataset(
    dataset: &crate::sim::dataset::Dataset,
    crop_spec: &CropSpec,
    brightness_spec: BrightnessSpec,
    flip: bool,
    seed: u64,
) -> Result<(crate::sim::dataset::Dataset, Vec<Provenance>)> {
    use crate::sim::dataset::{quantize_image, Dataset, DatasetMeta, RawRecord};
    crop_spec.validate()?;
    let labels: Vec<f32> = dataset.records.iter().map(|r| r.steering_deg).collect();
    let plan = augmentation_plan(&labels, brightness_spec, flip, seed);
    let (h, w) = (dataset.meta.height, dataset.meta.width);
    let top = crop_spec.top_rows(h);
    let ch = crop_spec.cropped_height(h);
    let mut records = Vec::with_capacity(plan.len());
    for p in &plan {
        let src = &dataset.records[p.source_index];
        let mut image = src.image_buf(h, w).crop_rows(top, ch)?;
        let mut seg = src.seg_map(h, w).crop_rows(top, ch)?;
        let mut kin = src.kinematics;
        let mut steering = src.steering_deg;
        if p.flipped {
            image = image.flipped_horizontal();
            seg = seg.flipped_horizontal();
            kin = kin.flipped();
            steering = -steering;
        }
        let image = brightness(&image, p.brightness_factor as f64)?;
        records.push(RawRecord {
            timestamp: src.timestamp,
            steering_deg: steering,
            kinematics: kin,
            image: quantize_image(&image),
            seg: seg.classes,
        });
    }
    let augmented = Dataset {
        meta: DatasetMeta {
            version: dataset.meta.version,
            width: w,
            height: ch,
            hz: dataset.meta.hz,
            seeds: dataset.meta.seeds.clone(),
            episodes: Vec::new(),
        },
        records,
    };
    Ok((augmented, plan))
}

/// Provenance sidecar text: one line per sample.
pub fn provenance_sidecar(plan: &[Provenance]) -> String {
    let mut out = String::with_capacity(plan.len() * 16);
    for p in plan {
        out.push_str(&p.sidecar_line());
        out.push('\n');
    }
    out
}
