//! Recorded-driving dataset: the on-disk format (manifest.txt +
//! records.bin) and expert demonstration collection.
//!
//! records.bin holds per record, little-endian:
//!   timestamp f64, steering f32, kinematics 5xf32,
//!   image H*W*3 u8, seg H*W u8

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::dynamics::{step_dynamics, DynamicsConfig};
use super::expert::PurePursuit;
use super::render::{render_frame, RenderConfig};
use super::track::{generate_track, Theme, TrackSpec};
use super::types::{Kinematics, VehicleState};
use crate::augment::temporal_subsample;
use crate::error::{Error, Result};
use crate::image::{ImageBuf, SegMap};
use crate::rng::Rng;

pub const DATASET_VERSION: u32 = 1;

/// One recorded timestep in storage form (u8-quantized pixels).
#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub timestamp: f64,
    pub steering_deg: f32,
    pub kinematics: Kinematics,
    /// H*W*3 RGB bytes.
    pub image: Vec<u8>,
    /// H*W ground-truth class ids.
    pub seg: Vec<u8>,
}

impl RawRecord {
    pub fn image_buf(&self, height: usize, width: usize) -> ImageBuf {
        let mut img = ImageBuf::new(height, width);
        for (dst, &src) in img.data.iter_mut().zip(&self.image) {
            *dst = src as f32 / 255.0;
        }
        img
    }

    pub fn seg_map(&self, height: usize, width: usize) -> SegMap {
        SegMap {
            height,
            width,
            classes: self.seg.clone(),
        }
    }
}

pub fn quantize_image(img: &ImageBuf) -> Vec<u8> {
    img.data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Contiguous run of records from one episode on one track.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeSpan {
    pub track_seed: u64,
    pub start: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetMeta {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    pub hz: f64,
    pub seeds: Vec<u64>,
    pub episodes: Vec<EpisodeSpan>,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub records: Vec<RawRecord>,
}

impl Dataset {
    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Record indices of one episode.
    pub fn episode_indices(&self, e: usize) -> std::ops::Range<usize> {
        let span = &self.meta.episodes[e];
        span.start..span.start + span.count
    }
}

pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let meta = &dataset.meta;
    let mut manifest = String::new();
    manifest.push_str(&format!("version {}\n", meta.version));
    manifest.push_str(&format!("width {}\n", meta.width));
    manifest.push_str(&format!("height {}\n", meta.height));
    manifest.push_str(&format!("hz {}\n", meta.hz));
    manifest.push_str(&format!("record_count {}\n", dataset.records.len()));
    manifest.push_str("seeds");
    for s in &meta.seeds {
        manifest.push_str(&format!(" {s}"));
    }
    manifest.push('\n');
    manifest.push_str(&format!("episodes {}\n", meta.episodes.len()));
    for ep in &meta.episodes {
        manifest.push_str(&format!(
            "episode {} {} {}\n",
            ep.track_seed, ep.start, ep.count
        ));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;

    let file = fs::File::create(dir.join("records.bin"))?;
    let mut w = BufWriter::new(file);
    let pixels = meta.width * meta.height;
    for rec in &dataset.records {
        if rec.image.len() != pixels * 3 || rec.seg.len() != pixels {
            return Err(Error::Usage(format!(
                "record buffers do not match {}x{} resolution",
                meta.height, meta.width
            )));
        }
        w.write_all(&rec.timestamp.to_le_bytes())?;
        w.write_all(&rec.steering_deg.to_le_bytes())?;
        for k in rec.kinematics.to_array() {
            w.write_all(&k.to_le_bytes())?;
        }
        w.write_all(&rec.image)?;
        w.write_all(&rec.seg)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = fs::read_to_string(dir.join("manifest.txt")).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("reading {}: {e}", dir.join("manifest.txt").display()),
        ))
    })?;
    let mut version = None;
    let mut width = None;
    let mut height = None;
    let mut hz = None;
    let mut record_count = None;
    let mut seeds = Vec::new();
    let mut episodes = Vec::new();
    for line in manifest.lines() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("version") => version = parts.next().and_then(|v| v.parse().ok()),
            Some("width") => width = parts.next().and_then(|v| v.parse().ok()),
            Some("height") => height = parts.next().and_then(|v| v.parse().ok()),
            Some("hz") => hz = parts.next().and_then(|v| v.parse().ok()),
            Some("record_count") => record_count = parts.next().and_then(|v| v.parse().ok()),
            Some("seeds") => {
                seeds = parts.filter_map(|v| v.parse().ok()).collect();
            }
            Some("episode") => {
                let vals: Vec<usize> = parts.filter_map(|v| v.parse().ok()).collect();
                let seed: u64 = line
                    .split_whitespace()
                    .nth(1)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Format(format!("bad episode line {line:?}")))?;
                if vals.len() != 3 {
                    return Err(Error::Format(format!("bad episode line {line:?}")));
                }
                episodes.push(EpisodeSpan {
                    track_seed: seed,
                    start: vals[1],
                    count: vals[2],
                });
            }
            _ => {}
        }
    }
    let version = version.ok_or_else(|| Error::Format("manifest missing version".into()))?;
    let width: usize = width.ok_or_else(|| Error::Format("manifest missing width".into()))?;
    let height: usize = height.ok_or_else(|| Error::Format("manifest missing height".into()))?;
    let hz = hz.ok_or_else(|| Error::Format("manifest missing hz".into()))?;
    let record_count: usize =
        record_count.ok_or_else(|| Error::Format("manifest missing record_count".into()))?;

    let file = fs::File::open(dir.join("records.bin"))?;
    let mut r = BufReader::new(file);
    let pixels = width * height;
    let mut records = Vec::with_capacity(record_count);
    for _ in 0..record_count {
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let timestamp = f64::from_le_bytes(b8);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let steering_deg = f32::from_le_bytes(b4);
        let mut kin = [0f32; 5];
        for k in kin.iter_mut() {
            r.read_exact(&mut b4)?;
            *k = f32::from_le_bytes(b4);
        }
        let mut image = vec![0u8; pixels * 3];
        r.read_exact(&mut image)?;
        let mut seg = vec![0u8; pixels];
        r.read_exact(&mut seg)?;
        records.push(RawRecord {
            timestamp,
            steering_deg,
            kinematics: Kinematics::from_array(kin),
            image,
            seg,
        });
    }
    Ok(Dataset {
        meta: DatasetMeta {
            version,
            width,
            height,
            hz,
            seeds,
            episodes,
        },
        records,
    })
}

/// Demonstration-collection settings.
#[derive(Clone, Debug)]
pub struct CollectConfig {
    pub theme: Theme,
    pub track_seeds: Vec<u64>,
    pub duration_seconds: f64,
    pub episode_seconds: f64,
    pub control_hz: f64,
    pub sample_hz: f64,
    pub cruise_speed: f64,
    /// Episodes start offset from the centerline (uniform +-max) so the
    /// expert's recovery maneuvers are part of the data.
    pub start_offset_max: f64,
    pub start_heading_err_deg: f64,
    /// Smooth exploration noise added to the executed steering (the
    /// recorded label stays the expert command for the visited state).
    /// Plays the role of the sloppiness in human demonstrations and
    /// fills the dataset with recovery maneuvers.
    pub steering_noise_deg: f64,
    pub render: RenderConfig,
    pub dynamics: DynamicsConfig,
    pub expert: PurePursuit,
    pub seed: u64,
}

impl Default for CollectConfig {
    fn default() -> Self {
        CollectConfig {
            theme: Theme::Desert,
            track_seeds: vec![101, 102, 103, 104],
            duration_seconds: 600.0,
            episode_seconds: 60.0,
            control_hz: 10.0,
            sample_hz: 2.0,
            cruise_speed: 15.0,
            start_offset_max: 0.8,
            start_heading_err_deg: 8.0,
            steering_noise_deg: 3.0,
            render: RenderConfig::default(),
            dynamics: DynamicsConfig::default(),
            expert: PurePursuit::default(),
            seed: 42,
        }
    }
}

/// A collection run: the recorded dataset plus, per kept record, the
/// camera frame one control step (1/control_hz seconds) earlier --
/// the flow channel's reference frame. Empty for episode-first records.
#[derive(Clone, Debug)]
pub struct CollectOutput {
    pub dataset: Dataset,
    /// Raw RGB bytes of the previous camera frame per record (same
    /// resolution as the dataset images); empty vec at episode starts.
    pub prev_images: Vec<Vec<u8>>,
}

/// Drive the scripted expert and record demonstrations: the simulation
/// runs at `control_hz` and the kept records are the `sample_hz` temporal
/// subsample of each episode. Frames are rendered for kept records only
/// (rendering is a pure function of state, so this is equivalent to
/// rendering everything and then discarding). Each kept record also
/// renders its predecessor frame at the camera rate for optical flow.
pub fn collect_demonstrations(config: &CollectConfig) -> Result<CollectOutput> {
    if config.track_seeds.is_empty() {
        return Err(Error::Config("collect needs at least one track seed".into()));
    }
    let episode_count =
        (config.duration_seconds / config.episode_seconds).round().max(1.0) as usize;
    let steps_per_episode = (config.episode_seconds * config.control_hz).round() as usize;
    let dt = 1.0 / config.control_hz;
    let substeps = 10usize;
    let sub_dt = dt / substeps as f64;
    let mut rng = Rng::derive(config.seed, "collect");

    let tracks: Vec<TrackSpec> = config
        .track_seeds
        .iter()
        .map(|&s| generate_track(s, config.theme))
        .collect();

    let mut records: Vec<RawRecord> = Vec::new();
    let mut prev_images: Vec<Vec<u8>> = Vec::new();
    let mut episodes: Vec<EpisodeSpan> = Vec::new();
    let mut global_time = 0.0f64;

    for ep in 0..episode_count {
        let track = &tracks[ep % tracks.len()];
        let s0 = rng.uniform(0.0, track.total_length);
        let offset0 = rng.uniform(-config.start_offset_max, config.start_offset_max);
        let herr0 = rng
            .uniform(-config.start_heading_err_deg, config.start_heading_err_deg)
            .to_radians();
        let (p, tangent, _) = track.sample(s0);
        // positive offset means left of the centerline
        let start = [p[0] + offset0 * tangent.sin(), p[1] - offset0 * tangent.cos()];
        let mut state = VehicleState::at(
            start[0],
            start[1],
            tangent + herr0,
            config.cruise_speed * rng.uniform(0.75, 1.0),
        );
        let mut s_hint = s0;

        // simulate the whole episode at control rate, bookkeeping only.
        // The vehicle executes the expert command plus smooth noise; the
        // recorded label is the clean expert command for the state.
        let mut step_states: Vec<(VehicleState, f64, f64, f64, f64)> =
            Vec::with_capacity(steps_per_episode);
        let mut executed_history: Vec<f64> = Vec::with_capacity(steps_per_episode);
        let noise_refresh = (config.control_hz.round() as usize).max(1);
        let mut noise_from = 0.0f64;
        let mut noise_to = rng.uniform(-config.steering_noise_deg, config.steering_noise_deg);
        for step in 0..steps_per_episode {
            let (cmd, s_now) = config.expert.steering(track, &state, s_hint);
            s_hint = s_now;
            let accel = ((config.cruise_speed - state.speed) / 2.0).clamp(0.0, 5.0);
            let prev_cmd = if step >= 5 { executed_history[step - 5] } else { 0.0 };
            step_states.push((state, cmd, accel, prev_cmd, s_now));
            // piecewise-linear noise, refreshed once a second
            if step % noise_refresh == 0 && step > 0 {
                noise_from = noise_to;
                noise_to = rng.uniform(-config.steering_noise_deg, config.steering_noise_deg);
            }
            let frac = (step % noise_refresh) as f64 / noise_refresh as f64;
            let executed = cmd + noise_from + (noise_to - noise_from) * frac;
            executed_history.push(executed);
            for _ in 0..substeps {
                state = step_dynamics(&state, executed, accel, sub_dt, &config.dynamics);
            }
        }

        let timestamps: Vec<f64> = (0..steps_per_episode).map(|i| i as f64 * dt).collect();
        let kept = temporal_subsample(&timestamps, config.sample_hz)?;
        let ep_start = records.len();
        for &idx in &kept {
            let (st, cmd, accel, prev_cmd, s_step) = step_states[idx];
            let (s_now, offset) = track.project_near([st.x, st.y], s_step, 40.0);
            let tangent = track.sample(s_now).1;
            let heading_err = wrap_angle(st.heading - tangent).to_degrees();
            let kin = Kinematics {
                acceleration: accel.clamp(0.0, 5.0) as f32,
                speed_mph: (st.speed * 2.236_936) as f32,
                heading_deg: heading_err.clamp(-45.0, 45.0) as f32,
                distance_to_curb: offset.clamp(-2.0, 2.0) as f32,
                previous_steering_deg: prev_cmd.clamp(-45.0, 45.0) as f32,
            };
            let (image, seg) = render_frame(track, &st, &config.render, s_now);
            if idx > 0 {
                let (prev_st, _, _, _, prev_s) = step_states[idx - 1];
                let (prev_img, _) = render_frame(track, &prev_st, &config.render, prev_s);
                prev_images.push(quantize_image(&prev_img));
            } else {
                prev_images.push(Vec::new());
            }
            records.push(RawRecord {
                timestamp: global_time + timestamps[idx],
                steering_deg: cmd as f32,
                kinematics: kin,
                image: quantize_image(&image),
                seg: seg.classes,
            });
        }
        episodes.push(EpisodeSpan {
            track_seed: track.seed,
            start: ep_start,
            count: records.len() - ep_start,
        });
        global_time += config.episode_seconds;
    }

    Ok(CollectOutput {
        dataset: Dataset {
            meta: DatasetMeta {
                version: DATASET_VERSION,
                width: config.render.width,
                height: config.render.height,
                hz: config.sample_hz,
                seeds: config.track_seeds.clone(),
                episodes,
            },
            records,
        },
        prev_images,
    })
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = a;
    while x > std::f64::consts::PI {
        x -= 2.0 * std::f64::consts::PI;
    }
    while x < -std::f64::consts::PI {
        x += 2.0 * std::f64::consts::PI;
    }
    x
}
