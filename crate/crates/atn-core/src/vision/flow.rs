//! Dense optical flow by coarse-to-fine Horn-Schunck iteration.
//!
//! Classic variational flow: minimize the brightness-constancy +
//! smoothness energy with Jacobi updates
//!   u = u_bar - Ix (Ix u_bar + Iy v_bar + It) / (alpha^2 + Ix^2 + Iy^2)
//! on a small image pyramid with bilinear warping between levels, which
//! lets displacements of a few pixels converge. Intensities are scaled to
//! [0, 255]; the default smoothness weight is tuned for that range.

use crate::error::{Error, Result};
use crate::image::{FlowField, ImageBuf};

#[derive(Clone, Copy, Debug)]
pub struct FlowConfig {
    /// Smoothness weight.
    pub alpha: f64,
    /// Jacobi iterations per pyramid level.
    pub iterations: usize,
    /// Maximum pyramid depth (levels stop early when dims get small or
    /// odd).
    pub max_levels: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            alpha: 10.0,
            iterations: 100,
            max_levels: 3,
        }
    }
}

struct Plane {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Plane {
    #[inline]
    fn at(&self, y: isize, x: isize) -> f32 {
        let yy = y.clamp(0, self.h as isize - 1) as usize;
        let xx = x.clamp(0, self.w as isize - 1) as usize;
        self.data[yy * self.w + xx]
    }

    /// 2x2 mean downsample (dims must be even).
    fn half(&self) -> Plane {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = vec![0.0f32; h * w];
        for y in 0..h {
            for x in 0..w {
                let base = 2 * y * self.w + 2 * x;
                data[y * w + x] = 0.25
                    * (self.data[base]
                        + self.data[base + 1]
                        + self.data[base + self.w]
                        + self.data[base + self.w + 1]);
            }
        }
        Plane { h, w, data }
    }

    /// Bilinear sample at a real-valued position, replicate borders.
    fn bilinear(&self, y: f32, x: f32) -> f32 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at(yi, xi);
        let b = self.at(yi, xi + 1);
        let c = self.at(yi + 1, xi);
        let d = self.at(yi + 1, xi + 1);
        a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy
    }
}

/// Weighted 8-neighbor average used by the Horn-Schunck update.
fn neighbor_average(field: &[f32], h: usize, w: usize, out: &mut [f32]) {
    let at = |y: isize, x: isize| -> f32 {
        let yy = y.clamp(0, h as isize - 1) as usize;
        let xx = x.clamp(0, w as isize - 1) as usize;
        field[yy * w + xx]
    };
    for y in 0..h as isize {
        for x in 0..w as isize {
            let axial = at(y - 1, x) + at(y + 1, x) + at(y, x - 1) + at(y, x + 1);
            let diag = at(y - 1, x - 1) + at(y - 1, x + 1) + at(y + 1, x - 1) + at(y + 1, x + 1);
            out[(y as usize) * w + x as usize] = axial / 6.0 + diag / 12.0;
        }
    }
}

/// Horn-Schunck at one level; `prev`/`next` are same-size planes,
/// `u`/`v` hold the initial estimate and receive the refined flow.
fn horn_schunck_level(prev: &Plane, next: &Plane, cfg: &FlowConfig, u: &mut Vec<f32>, v: &mut Vec<f32>) {
    let (h, w) = (prev.h, prev.w);
    // warp `next` back by the current flow so the residual is small
    let mut warped = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            warped[i] = next.bilinear(y as f32 + v[i], x as f32 + u[i]);
        }
    }
    let warped = Plane { h, w, data: warped };
    // central-difference derivatives averaged over both frames;
    // symmetric stencils keep the mirror property of the energy
    let mut ix = vec![0.0f32; h * w];
    let mut iy = vec![0.0f32; h * w];
    let mut it = vec![0.0f32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = (y as usize) * w + x as usize;
            ix[i] = 0.25
                * ((prev.at(y, x + 1) - prev.at(y, x - 1))
                    + (warped.at(y, x + 1) - warped.at(y, x - 1)));
            iy[i] = 0.25
                * ((prev.at(y + 1, x) - prev.at(y - 1, x))
                    + (warped.at(y + 1, x) - warped.at(y - 1, x)));
            it[i] = warped.data[i] - prev.data[i];
        }
    }
    let alpha2 = (cfg.alpha * cfg.alpha) as f32;
    let mut du = vec![0.0f32; h * w];
    let mut dv = vec![0.0f32; h * w];
    let mut du_bar = vec![0.0f32; h * w];
    let mut dv_bar = vec![0.0f32; h * w];
    for _ in 0..cfg.iterations {
        neighbor_average(&du, h, w, &mut du_bar);
        neighbor_average(&dv, h, w, &mut dv_bar);
        for i in 0..h * w {
            let denom = alpha2 + ix[i] * ix[i] + iy[i] * iy[i];
            let t = (ix[i] * du_bar[i] + iy[i] * dv_bar[i] + it[i]) / denom;
            du[i] = du_bar[i] - ix[i] * t;
            dv[i] = dv_bar[i] - iy[i] * t;
        }
    }
    for i in 0..h * w {
        u[i] += du[i];
        v[i] += dv[i];
    }
}

/// Dense flow from `prev` to `next` (pixels/frame, positive u points
/// rightward). Images must share a shape; both are converted to
/// grayscale internally.
pub fn compute_flow(prev: &ImageBuf, next: &ImageBuf, cfg: &FlowConfig) -> Result<FlowField> {
    if prev.height != next.height || prev.width != next.width {
        return Err(Error::Usage(format!(
            "flow inputs differ in shape: {}x{} vs {}x{}",
            prev.height, prev.width, next.height, next.width
        )));
    }
    let p0 = Plane {
        h: prev.height,
        w: prev.width,
        data: prev.to_gray_255(),
    };
    let p1 = Plane {
        h: next.height,
        w: next.width,
        data: next.to_gray_255(),
    };
    // build pyramids while dims stay even and large enough
    let mut pyr0 = vec![p0];
    let mut pyr1 = vec![p1];
    while pyr0.len() < cfg.max_levels {
        let top = &pyr0[pyr0.len() - 1];
        if top.h % 2 != 0 || top.w % 2 != 0 || top.h / 2 < 8 || top.w / 2 < 8 {
            break;
        }
        let h0 = pyr0.last().unwrap().half();
        let h1 = pyr1.last().unwrap().half();
        pyr0.push(h0);
        pyr1.push(h1);
    }

    let coarse = pyr0.len() - 1;
    let mut u = vec![0.0f32; pyr0[coarse].h * pyr0[coarse].w];
    let mut v = vec![0.0f32; pyr0[coarse].h * pyr0[coarse].w];
    for level in (0..=coarse).rev() {
        horn_schunck_level(&pyr0[level], &pyr1[level], cfg, &mut u, &mut v);
        if level > 0 {
            // upsample the estimate to the next finer level
            let (h, w) = (pyr0[level].h, pyr0[level].w);
            let (fh, fw) = (pyr0[level - 1].h, pyr0[level - 1].w);
            let mut fu = vec![0.0f32; fh * fw];
            let mut fv = vec![0.0f32; fh * fw];
            for y in 0..fh {
                for x in 0..fw {
                    let src = (y / 2).min(h - 1) * w + (x / 2).min(w - 1);
                    fu[y * fw + x] = 2.0 * u[src];
                    fv[y * fw + x] = 2.0 * v[src];
                }
            }
            u = fu;
            v = fv;
        }
    }
    let field = FlowField {
        height: prev.height,
        width: prev.width,
        u,
        v,
    };
    for (name, plane) in [("u", &field.u), ("v", &field.v)] {
        for &x in plane {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("flow {name} plane")));
            }
        }
    }
    Ok(field)
}
