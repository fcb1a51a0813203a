//! Image-like buffers: RGB frames, per-pixel class maps, and dense flow
//! fields, plus the color-space and geometry helpers the augmentation
//! pipeline needs. RGB values live in [0, 1].

use crate::error::{Error, Result};

/// H x W x 3 RGB image, row-major, channel-interleaved, values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(height: usize, width: usize) -> Self {
        ImageBuf {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = rgb[0];
        self.data[i + 1] = rgb[1];
        self.data[i + 2] = rgb[2];
    }

    /// Mirror left-right.
    pub fn flipped_horizontal(&self) -> ImageBuf {
        let mut out = ImageBuf::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, x, self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }

    /// Keep rows [top_rows, top_rows + new_height).
    pub fn crop_rows(&self, top_rows: usize, new_height: usize) -> Result<ImageBuf> {
        if top_rows + new_height > self.height {
            return Err(Error::Usage(format!(
                "crop rows {top_rows}..{} exceed image height {}",
                top_rows + new_height,
                self.height
            )));
        }
        let mut out = ImageBuf::new(new_height, self.width);
        let row_len = self.width * 3;
        for y in 0..new_height {
            let src = (top_rows + y) * row_len;
            out.data[y * row_len..(y + 1) * row_len]
                .copy_from_slice(&self.data[src..src + row_len]);
        }
        Ok(out)
    }

    /// Pad vertically to `target_height` by replicating the first and last
    /// rows, splitting the padding as evenly as possible (extra row at the
    /// bottom).
    pub fn pad_rows_to(&self, target_height: usize) -> Result<ImageBuf> {
        if target_height < self.height {
            return Err(Error::Usage(format!(
                "pad target {target_height} below current height {}",
                self.height
            )));
        }
        let extra = target_height - self.height;
        let top = extra / 2;
        let mut out = ImageBuf::new(target_height, self.width);
        let row_len = self.width * 3;
        for y in 0..target_height {
            let src_y = y.saturating_sub(top).min(self.height - 1);
            let src = src_y * row_len;
            out.data[y * row_len..(y + 1) * row_len]
                .copy_from_slice(&self.data[src..src + row_len]);
        }
        Ok(out)
    }

    /// Grayscale plane scaled to [0, 255] (the range the optical-flow
    /// smoothness weight is tuned for).
    pub fn to_gray_255(&self) -> Vec<f32> {
        let mut out = vec![0.0f32; self.height * self.width];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[i] = (0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) * 255.0;
        }
        out
    }
}

/// Per-pixel class map over the nine scene categories.
#[derive(Clone, Debug, PartialEq)]
pub struct SegMap {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u8>,
}

pub const SEG_CLASS_COUNT: usize = 9;

/// Fixed palette order; ids are indices into this list.
pub const SEG_CLASS_NAMES: [&str; SEG_CLASS_COUNT] = [
    "sky",
    "road",
    "lane markings",
    "building",
    "traffic lights",
    "pedestrian",
    "tree",
    "pavement",
    "vehicle",
];

impl SegMap {
    pub fn new(height: usize, width: usize) -> Self {
        SegMap {
            height,
            width,
            classes: vec![0; height * width],
        }
    }

    #[inline]
    pub fn class(&self, y: usize, x: usize) -> u8 {
        self.classes[y * self.width + x]
    }

    #[inline]
    pub fn set_class(&mut self, y: usize, x: usize, c: u8) {
        self.classes[y * self.width + x] = c;
    }

    pub fn flipped_horizontal(&self) -> SegMap {
        let mut out = SegMap::new(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_class(y, x, self.class(y, self.width - 1 - x));
            }
        }
        out
    }

    pub fn crop_rows(&self, top_rows: usize, new_height: usize) -> Result<SegMap> {
        if top_rows + new_height > self.height {
            return Err(Error::Usage(format!(
                "crop rows {top_rows}..{} exceed map height {}",
                top_rows + new_height,
                self.height
            )));
        }
        let mut out = SegMap::new(new_height, self.width);
        for y in 0..new_height {
            let src = (top_rows + y) * self.width;
            out.classes[y * self.width..(y + 1) * self.width]
                .copy_from_slice(&self.classes[src..src + self.width]);
        }
        Ok(out)
    }
}

/// Dense optical flow in pixels/frame; positive u points rightward.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(height: usize, width: usize) -> Self {
        FlowField {
            height,
            width,
            u: vec![0.0; height * width],
            v: vec![0.0; height * width],
        }
    }

    /// The flow of the mirrored scene: fields mirror and u negates.
    pub fn flipped_horizontal(&self) -> FlowField {
        let mut out = FlowField::zeros(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                let src = y * self.width + (self.width - 1 - x);
                let dst = y * self.width + x;
                out.u[dst] = -self.u[src];
                out.v[dst] = self.v[src];
            }
        }
        out
    }
}

/// RGB -> HSV, all components in [0, 1]. Math in f64 so that the
/// round-trip stays within 1e-6 of the source.
pub fn rgb_to_hsv(rgb: [f32; 3]) -> [f64; 3] {
    let r = rgb[0] as f64;
    let g = rgb[1] as f64;
    let b = rgb[2] as f64;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / delta).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / delta + 2.0) / 6.0
    } else {
        ((r - g) / delta + 4.0) / 6.0
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

/// HSV -> RGB, inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f32; 3] {
    let (h, s, v) = (hsv[0], hsv[1], hsv[2]);
    let c = v * s;
    let hp = h * 6.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [(r1 + m) as f32, (g1 + m) as f32, (b1 + m) as f32]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn hsv_round_trip_is_tight() {
        let mut rng = Rng::new(5);
        for _ in 0..2000 {
            let rgb = [rng.next_f32(), rng.next_f32(), rng.next_f32()];
            let back = hsv_to_rgb(rgb_to_hsv(rgb));
            for c in 0..3 {
                assert!(
                    (rgb[c] - back[c]).abs() < 1e-6,
                    "{rgb:?} -> {back:?}"
                );
            }
        }
    }

    #[test]
    fn gray_pixels_have_zero_saturation() {
        let hsv = rgb_to_hsv([0.4, 0.4, 0.4]);
        assert_eq!(hsv[1], 0.0);
        assert!((hsv[2] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn flip_is_an_involution_on_images() {
        let mut rng = Rng::new(9);
        let mut img = ImageBuf::new(6, 5);
        for v in img.data.iter_mut() {
            *v = rng.next_f32();
        }
        let back = img.flipped_horizontal().flipped_horizontal();
        assert_eq!(img, back);
    }

    #[test]
    fn crop_shifts_rows() {
        let mut img = ImageBuf::new(4, 2);
        for y in 0..4 {
            for x in 0..2 {
                img.set_pixel(y, x, [y as f32, x as f32, 0.0]);
            }
        }
        let cropped = img.crop_rows(1, 2).unwrap();
        assert_eq!(cropped.height, 2);
        assert_eq!(cropped.pixel(0, 0), img.pixel(1, 0));
        assert_eq!(cropped.pixel(1, 1), img.pixel(2, 1));
    }

    #[test]
    fn pad_replicates_edge_rows() {
        let mut img = ImageBuf::new(2, 1);
        img.set_pixel(0, 0, [0.1, 0.1, 0.1]);
        img.set_pixel(1, 0, [0.9, 0.9, 0.9]);
        let padded = img.pad_rows_to(6).unwrap();
        assert_eq!(padded.height, 6);
        assert_eq!(padded.pixel(0, 0), [0.1, 0.1, 0.1]);
        assert_eq!(padded.pixel(1, 0), [0.1, 0.1, 0.1]);
        assert_eq!(padded.pixel(2, 0), [0.1, 0.1, 0.1]);
        assert_eq!(padded.pixel(3, 0), [0.9, 0.9, 0.9]);
        assert_eq!(padded.pixel(5, 0), [0.9, 0.9, 0.9]);
    }

    #[test]
    fn flow_flip_negates_u_and_involutes() {
        let mut f = FlowField::zeros(3, 4);
        let mut rng = Rng::new(2);
        for i in 0..12 {
            f.u[i] = rng.next_f32() - 0.5;
            f.v[i] = rng.next_f32() - 0.5;
        }
        let g = f.flipped_horizontal();
        assert_eq!(g.u[0], -f.u[3]);
        assert_eq!(g.v[0], f.v[3]);
        assert_eq!(f, g.flipped_horizontal());
    }
}
