//! Channel stacking: fuse the RGB frame with its segmentation map and
//! flow field into the network input tensor, plus the optional on-disk
//! channel caches.
//!
//! Channel order (documented and stable): R, G, B, seg, u, v. The seg
//! channel is the class id scaled onto [0,1] by id/8 (one-hot available
//! behind a flag, giving R,G,B, 9 one-hot planes, u, v); flow channels
//! are normalized by a fixed max-flow constant and clamped to [-1,1].

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{FlowField, ImageBuf, SegMap, SEG_CLASS_COUNT};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct StackConfig {
    /// Flow normalization constant, pixels/frame; values beyond clamp.
    pub flow_norm: f32,
    /// Encode the seg map as 9 one-hot planes instead of one scaled-id
    /// channel.
    pub one_hot_seg: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            flow_norm: 8.0,
            one_hot_seg: false,
        }
    }
}

impl StackConfig {
    pub fn channel_count(&self) -> usize {
        3 + if self.one_hot_seg { SEG_CLASS_COUNT } else { 1 } + 2
    }
}

/// Stack image + seg + flow into a [C, H, W] tensor.
pub fn stack_channels(
    image: &ImageBuf,
    seg: &SegMap,
    flow: &FlowField,
    config: &StackConfig,
) -> Result<Tensor<f32>> {
    let (h, w) = (image.height, image.width);
    if seg.height != h || seg.width != w || flow.height != h || flow.width != w {
        return Err(Error::Usage(format!(
            "stack inputs disagree: image {h}x{w}, seg {}x{}, flow {}x{}",
            seg.height, seg.width, flow.height, flow.width
        )));
    }
    let c = config.channel_count();
    let plane = h * w;
    let mut data = vec![0.0f32; c * plane];
    for y in 0..h {
        for x in 0..w {
            let px = image.pixel(y, x);
            let i = y * w + x;
            data[i] = px[0];
            data[plane + i] = px[1];
            data[2 * plane + i] = px[2];
        }
    }
    let mut ch = 3;
    if config.one_hot_seg {
        for (i, &cls) in seg.classes.iter().enumerate() {
            let cls = (cls as usize).min(SEG_CLASS_COUNT - 1);
            data[(ch + cls) * plane + i] = 1.0;
        }
        ch += SEG_CLASS_COUNT;
    } else {
        for (i, &cls) in seg.classes.iter().enumerate() {
            data[ch * plane + i] = cls as f32 / (SEG_CLASS_COUNT - 1) as f32;
        }
        ch += 1;
    }
    for i in 0..plane {
        data[ch * plane + i] = (flow.u[i] / config.flow_norm).clamp(-1.0, 1.0);
        data[(ch + 1) * plane + i] = (flow.v[i] / config.flow_norm).clamp(-1.0, 1.0);
    }
    Tensor::from_vec(&[c, h, w], data)
}

/// Replicate-pad a [C, H, W] tensor vertically to `target_h` rows
/// (extra rows split evenly, remainder at the bottom).
pub fn pad_tensor_rows(t: &Tensor<f32>, target_h: usize) -> Result<Tensor<f32>> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::Usage(format!("pad expects [C,H,W], got {s:?}")));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if target_h < h {
        return Err(Error::Usage(format!("pad target {target_h} below {h}")));
    }
    let top = (target_h - h) / 2;
    let mut out = Tensor::zeros(&[c, target_h, w]);
    for ci in 0..c {
        for y in 0..target_h {
            let src_y = y.saturating_sub(top).min(h - 1);
            let src = (ci * h + src_y) * w;
            let dst = (ci * target_h + y) * w;
            out.data_mut()[dst..dst + w].copy_from_slice(&t.data()[src..src + w]);
        }
    }
    Ok(out)
}

const CACHE_MAGIC: &[u8; 4] = b"ATNC";
const DTYPE_U8: u32 = 1;
const DTYPE_F32_PAIR: u32 = 3;

fn write_cache_header(w: &mut impl Write, dtype: u32, h: usize, w_px: usize) -> Result<()> {
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&dtype.to_le_bytes())?;
    w.write_all(&(h as u32).to_le_bytes())?;
    w.write_all(&(w_px as u32).to_le_bytes())?;
    Ok(())
}

fn read_cache_header(r: &mut impl Read, want_dtype: u32, path: &Path) -> Result<(usize, usize)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a channel cache (bad magic)",
            path.display()
        )));
    }
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let dtype = u32::from_le_bytes(b4);
    if dtype != want_dtype {
        return Err(Error::Format(format!(
            "{}: dtype {dtype}, expected {want_dtype}",
            path.display()
        )));
    }
    r.read_exact(&mut b4)?;
    let h = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let w = u32::from_le_bytes(b4) as usize;
    Ok((h, w))
}

/// Persist all per-record seg maps in one cache file.
pub fn save_seg_cache(path: &Path, maps: &[SegMap]) -> Result<()> {
    if maps.is_empty() {
        return Err(Error::Usage("empty seg cache".into()));
    }
    let (h, w) = (maps[0].height, maps[0].width);
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write_cache_header(&mut out, DTYPE_U8, h, w)?;
    out.write_all(&(maps.len() as u32).to_le_bytes())?;
    for m in maps {
        if m.height != h || m.width != w {
            return Err(Error::Usage("seg cache maps disagree in shape".into()));
        }
        out.write_all(&m.classes)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_seg_cache(path: &Path) -> Result<Vec<SegMap>> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let (h, w) = read_cache_header(&mut r, DTYPE_U8, path)?;
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut classes = vec![0u8; h * w];
        r.read_exact(&mut classes)?;
        out.push(SegMap {
            height: h,
            width: w,
            classes,
        });
    }
    Ok(out)
}

/// Persist all per-record flow fields in one cache file (u plane then v
/// plane per record).
pub fn save_flow_cache(path: &Path, fields: &[FlowField]) -> Result<()> {
    if fields.is_empty() {
        return Err(Error::Usage("empty flow cache".into()));
    }
    let (h, w) = (fields[0].height, fields[0].width);
    let file = fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    write_cache_header(&mut out, DTYPE_F32_PAIR, h, w)?;
    out.write_all(&(fields.len() as u32).to_le_bytes())?;
    for f in fields {
        if f.height != h || f.width != w {
            return Err(Error::Usage("flow cache fields disagree in shape".into()));
        }
        for plane in [&f.u, &f.v] {
            for &v in plane {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_flow_cache(path: &Path) -> Result<Vec<FlowField>> {
    let file = fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let (h, w) = read_cache_header(&mut r, DTYPE_F32_PAIR, path)?;
    let mut b4 = [0u8; 4];
    r.read_exact(&mut b4)?;
    let count = u32::from_le_bytes(b4) as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut f = FlowField::zeros(h, w);
        for plane in [&mut f.u, &mut f.v] {
            for v in plane.iter_mut() {
                r.read_exact(&mut b4)?;
                *v = f32::from_le_bytes(b4);
            }
        }
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn sample_inputs(h: usize, w: usize, seed: u64) -> (ImageBuf, SegMap, FlowField) {
        let mut rng = Rng::new(seed);
        let mut img = ImageBuf::new(h, w);
        for v in img.data.iter_mut() {
            *v = rng.next_f32();
        }
        let mut seg = SegMap::new(h, w);
        for c in seg.classes.iter_mut() {
            *c = rng.below(9) as u8;
        }
        let mut flow = FlowField::zeros(h, w);
        for i in 0..h * w {
            flow.u[i] = (rng.next_f32() - 0.5) * 20.0;
            flow.v[i] = (rng.next_f32() - 0.5) * 20.0;
        }
        (img, seg, flow)
    }

    #[test]
    fn six_channels_and_rgb_pass_through() {
        let (img, seg, flow) = sample_inputs(6, 8, 1);
        let t = stack_channels(&img, &seg, &flow, &StackConfig::default()).unwrap();
        assert_eq!(t.shape(), &[6, 6, 8]);
        for y in 0..6 {
            for x in 0..8 {
                let px = img.pixel(y, x);
                for c in 0..3 {
                    assert_eq!(t.data()[c * 48 + y * 8 + x], px[c]);
                }
            }
        }
    }

    #[test]
    fn zero_flow_class_zero_means_zero_aux_channels() {
        let mut img = ImageBuf::new(4, 4);
        img.data.iter_mut().for_each(|v| *v = 0.5);
        let seg = SegMap::new(4, 4);
        let flow = FlowField::zeros(4, 4);
        let t = stack_channels(&img, &seg, &flow, &StackConfig::default()).unwrap();
        for i in 3 * 16..6 * 16 {
            assert_eq!(t.data()[i], 0.0);
        }
    }

    #[test]
    fn flow_channels_clamp_at_the_normalization_bound() {
        let (img, seg, mut flow) = sample_inputs(4, 4, 2);
        flow.u[0] = 100.0;
        flow.u[1] = -100.0;
        let t = stack_channels(&img, &seg, &flow, &StackConfig::default()).unwrap();
        assert_eq!(t.data()[4 * 16], 1.0);
        assert_eq!(t.data()[4 * 16 + 1], -1.0);
    }

    #[test]
    fn one_hot_mode_grows_channel_count() {
        let (img, seg, flow) = sample_inputs(4, 4, 3);
        let cfg = StackConfig {
            one_hot_seg: true,
            ..StackConfig::default()
        };
        let t = stack_channels(&img, &seg, &flow, &cfg).unwrap();
        assert_eq!(t.shape(), &[14, 4, 4]);
        // each pixel has exactly one hot seg plane
        for i in 0..16 {
            let hot: f32 = (0..9).map(|c| t.data()[(3 + c) * 16 + i]).sum();
            assert_eq!(hot, 1.0);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (img, seg, _) = sample_inputs(4, 4, 4);
        let flow = FlowField::zeros(6, 4);
        assert!(stack_channels(&img, &seg, &flow, &StackConfig::default()).is_err());
    }

    #[test]
    fn pad_replicates_rows_per_channel() {
        let t = Tensor::from_vec(&[2, 2, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
            .unwrap();
        let p = pad_tensor_rows(&t, 4).unwrap();
        assert_eq!(p.shape(), &[2, 4, 2]);
        assert_eq!(&p.data()[0..2], &[1.0, 2.0]); // replicated top
        assert_eq!(&p.data()[2..4], &[1.0, 2.0]);
        assert_eq!(&p.data()[6..8], &[3.0, 4.0]); // replicated bottom
    }

    #[test]
    fn caches_round_trip() {
        let dir = std::env::temp_dir().join("atn-cache-test");
        std::fs::create_dir_all(&dir).unwrap();
        let (_, seg, flow) = sample_inputs(6, 8, 5);
        let segs = vec![seg.clone(), seg.flipped_horizontal()];
        let flows = vec![flow.clone(), flow.flipped_horizontal()];
        save_seg_cache(&dir.join("seg.cache"), &segs).unwrap();
        save_flow_cache(&dir.join("flow.cache"), &flows).unwrap();
        assert_eq!(load_seg_cache(&dir.join("seg.cache")).unwrap(), segs);
        assert_eq!(load_flow_cache(&dir.join("flow.cache")).unwrap(), flows);
    }
}
