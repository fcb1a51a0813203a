//! Closed-loop track generation from piecewise line/arc segments.
//!
//! A track starts as a jittered polygon whose corners are filleted with
//! circular arcs, giving a closed C1 centerline with exact arc-length
//! parameterization. Themes control the corner-radius distribution
//! (mountain sharpest), scenery density, palette, lighting, and the
//! inclination rendering cue.

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Theme {
    Desert,
    Suburb,
    Mountain,
}

impl Theme {
    pub const ALL: [Theme; 3] = [Theme::Desert, Theme::Suburb, Theme::Mountain];

    pub fn name(&self) -> &'static str {
        match self {
            Theme::Desert => "desert",
            Theme::Suburb => "suburb",
            Theme::Mountain => "mountain",
        }
    }

    pub fn parse(s: &str) -> Result<Theme> {
        match s {
            "desert" => Ok(Theme::Desert),
            "suburb" => Ok(Theme::Suburb),
            "mountain" => Ok(Theme::Mountain),
            other => Err(Error::Config(format!("unknown theme {other:?}"))),
        }
    }

    /// Corner-radius range in meters; smaller radii mean sharper curves.
    fn corner_radius_range(&self) -> (f64, f64) {
        match self {
            Theme::Desert => (34.0, 80.0),
            Theme::Suburb => (22.0, 52.0),
            Theme::Mountain => (14.0, 36.0),
        }
    }

    fn waypoint_count_range(&self) -> (usize, usize) {
        match self {
            Theme::Desert => (8, 11),
            Theme::Suburb => (10, 14),
            Theme::Mountain => (12, 17),
        }
    }

    /// Scenery items per 100 m of track.
    pub fn scenery_density(&self) -> f64 {
        match self {
            Theme::Desert => 1.2,
            Theme::Suburb => 4.0,
            Theme::Mountain => 2.4,
        }
    }

    /// Amplitude of the horizon-shift inclination cue, radians.
    pub fn inclination_amplitude(&self) -> f64 {
        match self {
            Theme::Desert => 0.0,
            Theme::Suburb => 0.012,
            Theme::Mountain => 0.05,
        }
    }

    pub fn max_curvature(&self) -> f64 {
        1.0 / self.corner_radius_range().0
    }
}

/// One centerline piece: a straight line (curvature 0) or a circular arc.
/// Positive curvature bends to the right (headings are clockwise).
#[derive(Clone, Copy, Debug)]
pub struct Segment {
    pub start: [f64; 2],
    pub heading: f64,
    pub length: f64,
    pub curvature: f64,
}

impl Segment {
    /// Pose (position, heading) and curvature at arc length `t` in
    /// [0, length].
    pub fn sample(&self, t: f64) -> ([f64; 2], f64, f64) {
        if self.curvature.abs() < 1e-12 {
            let p = [
                self.start[0] + t * self.heading.cos(),
                self.start[1] + t * self.heading.sin(),
            ];
            (p, self.heading, 0.0)
        } else {
            let k = self.curvature;
            let h = self.heading + k * t;
            // center sits 1/k to the right of the start heading
            let r = 1.0 / k;
            let cx = self.start[0] - r * self.heading.sin();
            let cy = self.start[1] + r * self.heading.cos();
            let p = [cx + r * h.sin(), cy - r * h.cos()];
            (p, h, k)
        }
    }

    /// Closest point on this segment: returns (t, distance, signed
    /// lateral offset with positive to the left of travel).
    pub fn project(&self, p: [f64; 2]) -> (f64, f64, f64) {
        let t = if self.curvature.abs() < 1e-12 {
            let dx = p[0] - self.start[0];
            let dy = p[1] - self.start[1];
            (dx * self.heading.cos() + dy * self.heading.sin()).clamp(0.0, self.length)
        } else {
            let k = self.curvature;
            let r = 1.0 / k;
            let cx = self.start[0] - r * self.heading.sin();
            let cy = self.start[1] + r * self.heading.cos();
            // angle of p about the center, mapped back to arc length
            let ang = (p[1] - cy).atan2(p[0] - cx);
            // start point angle about the center
            let ang0 = (self.start[1] - cy).atan2(self.start[0] - cx);
            let mut dang = ang - ang0;
            // arc sweep runs from 0 to k*length with the sign of k
            let sweep = k * self.length;
            while dang - sweep / 2.0 > std::f64::consts::PI {
                dang -= 2.0 * std::f64::consts::PI;
            }
            while dang - sweep / 2.0 < -std::f64::consts::PI {
                dang += 2.0 * std::f64::consts::PI;
            }
            (dang / k).clamp(0.0, self.length)
        };
        let (q, h, _) = self.sample(t);
        let dx = p[0] - q[0];
        let dy = p[1] - q[1];
        let dist = (dx * dx + dy * dy).sqrt();
        // left unit vector for clockwise headings is (sin h, -cos h)
        let offset = dx * h.sin() - dy * h.cos();
        (t, dist, offset)
    }
}

/// Static roadside object rendered as a vertical billboard.
#[derive(Clone, Copy, Debug)]
pub struct SceneryItem {
    /// Arc-length position along the centerline.
    pub s: f64,
    /// Lateral offset (positive left), meters.
    pub lateral: f64,
    /// Segmentation class id (3 building, 4 traffic light, 5 pedestrian,
    /// 6 tree, 8 vehicle).
    pub class: u8,
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug)]
pub struct TrackSpec {
    pub seed: u64,
    pub theme: Theme,
    pub lane_width: f64,
    pub segments: Vec<Segment>,
    /// Cumulative arc length at the start of each segment.
    pub cumulative: Vec<f64>,
    pub total_length: f64,
    pub scenery: Vec<SceneryItem>,
    /// Phase of the inclination cue.
    pub inclination_phase: f64,
}

impl TrackSpec {
    /// Wrap an arc length onto [0, total).
    pub fn wrap(&self, s: f64) -> f64 {
        let mut t = s % self.total_length;
        if t < 0.0 {
            t += self.total_length;
        }
        t
    }

    fn segment_index(&self, s: f64) -> (usize, f64) {
        let s = self.wrap(s);
        // binary search over cumulative starts
        let mut lo = 0usize;
        let mut hi = self.segments.len();
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cumulative[mid] <= s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, s - self.cumulative[lo])
    }

    /// Pose and curvature at arc length s (wrapped).
    pub fn sample(&self, s: f64) -> ([f64; 2], f64, f64) {
        let (i, t) = self.segment_index(s);
        self.segments[i].sample(t)
    }

    pub fn curvature_at(&self, s: f64) -> f64 {
        let (i, _) = self.segment_index(s);
        self.segments[i].curvature
    }

    /// Global closest-point query: (arc length, signed lateral offset,
    /// positive left of travel).
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY, 0.0);
        for (i, seg) in self.segments.iter().enumerate() {
            let (t, dist, offset) = seg.project(p);
            if dist < best.1 {
                best = (self.cumulative[i] + t, dist, offset);
            }
        }
        (self.wrap(best.0), best.2)
    }

    /// Closest-point query restricted to segments near arc length
    /// `s_hint` (within `range` meters either way). Much cheaper than
    /// [`TrackSpec::project`] for per-pixel ground classification.
    pub fn project_near(&self, p: [f64; 2], s_hint: f64, range: f64) -> (f64, f64) {
        let lo = self.wrap(s_hint - range);
        let hi = self.wrap(s_hint + range);
        let (ilo, _) = self.segment_index(lo);
        let (ihi, _) = self.segment_index(hi);
        let n = self.segments.len();
        let mut best = (0.0, f64::INFINITY, 0.0);
        let mut i = ilo;
        loop {
            let seg = &self.segments[i];
            let (t, dist, offset) = seg.project(p);
            if dist < best.1 {
                best = (self.cumulative[i] + t, dist, offset);
            }
            if i == ihi {
                break;
            }
            i = (i + 1) % n;
        }
        (self.wrap(best.0), best.2)
    }

    /// Length-weighted mean absolute curvature.
    pub fn mean_abs_curvature(&self) -> f64 {
        let total: f64 = self
            .segments
            .iter()
            .map(|seg| seg.curvature.abs() * seg.length)
            .sum();
        total / self.total_length
    }

    /// Inclination cue (pitch offset in radians) at arc length s.
    pub fn inclination_at(&self, s: f64) -> f64 {
        let amp = self.theme.inclination_amplitude();
        if amp == 0.0 {
            return 0.0;
        }
        let wavelength = 400.0;
        (2.0 * std::f64::consts::PI * s / wavelength + self.inclination_phase).sin() * amp
    }

    /// Scenery items with arc length in [s0, s0 + span), handling wrap.
    pub fn scenery_in_range(&self, s0: f64, span: f64) -> Vec<&SceneryItem> {
        let s0 = self.wrap(s0);
        self.scenery
            .iter()
            .filter(|item| {
                let mut d = item.s - s0;
                if d < 0.0 {
                    d += self.total_length;
                }
                d < span
            })
            .collect()
    }
}

/// Generate a closed track for (seed, theme). Deterministic.
pub fn generate_track(seed: u64, theme: Theme) -> TrackSpec {
    let mut rng = Rng::derive(seed, &format!("track-{}", theme.name()));
    let (wp_lo, wp_hi) = theme.waypoint_count_range();
    let n = wp_lo + rng.below(wp_hi - wp_lo);
    let base_radius = rng.uniform(280.0, 360.0);

    // jittered polygon around the origin
    let mut verts: Vec<[f64; 2]> = Vec::with_capacity(n);
    for i in 0..n {
        let ang = 2.0 * std::f64::consts::PI * i as f64 / n as f64
            + rng.uniform(-0.25, 0.25) / n as f64 * 2.0 * std::f64::consts::PI;
        let r = base_radius * rng.uniform(0.85, 1.15);
        verts.push([r * ang.cos(), r * ang.sin()]);
    }

    // fillet each corner with an arc that fits the adjacent edges
    let (r_lo, r_hi) = theme.corner_radius_range();
    let mut tangent_len = vec![0.0f64; n];
    let mut radius = vec![0.0f64; n];
    let mut turn = vec![0.0f64; n];
    for i in 0..n {
        let prev = verts[(i + n - 1) % n];
        let v = verts[i];
        let next = verts[(i + 1) % n];
        let din = norm2(sub(v, prev));
        let dout = norm2(sub(next, v));
        let hin = heading_of(sub(v, prev));
        let hout = heading_of(sub(next, v));
        let dturn = wrap_angle(hout - hin);
        let half = (dturn.abs() / 2.0).tan();
        let mut r = rng.uniform(r_lo, r_hi);
        // limit the fillet so tangent points stay inside both edges
        let max_t = 0.38 * din.min(dout);
        if half > 1e-9 {
            let max_r = max_t / half;
            if r > max_r {
                r = max_r;
            }
        }
        radius[i] = r;
        tangent_len[i] = r * half;
        turn[i] = dturn;
    }

    let mut segments: Vec<Segment> = Vec::new();
    for i in 0..n {
        let v = verts[i];
        let next = verts[(i + 1) % n];
        let edge_heading = heading_of(sub(next, v));
        let edge_len = norm2(sub(next, v));
        // arc at corner i: from the tangent point on the incoming edge
        let prev = verts[(i + n - 1) % n];
        let hin = heading_of(sub(v, prev));
        let arc_start = [
            v[0] - tangent_len[i] * hin.cos(),
            v[1] - tangent_len[i] * hin.sin(),
        ];
        let sweep = turn[i];
        if sweep.abs() > 1e-9 && radius[i] > 1e-6 {
            let arc_len = radius[i] * sweep.abs();
            segments.push(Segment {
                start: arc_start,
                heading: hin,
                length: arc_len,
                curvature: sweep.signum() / radius[i],
            });
        }
        // straight from corner i's exit tangent point to corner i+1's entry
        let line_start = [
            v[0] + tangent_len[i] * edge_heading.cos(),
            v[1] + tangent_len[i] * edge_heading.sin(),
        ];
        let line_len = edge_len - tangent_len[i] - tangent_len[(i + 1) % n];
        if line_len > 1e-6 {
            segments.push(Segment {
                start: line_start,
                heading: edge_heading,
                length: line_len,
                curvature: 0.0,
            });
        }
    }

    let mut cumulative = Vec::with_capacity(segments.len());
    let mut total = 0.0;
    for seg in &segments {
        cumulative.push(total);
        total += seg.length;
    }

    // deterministic scenery placement
    let mut scenery = Vec::new();
    let density = theme.scenery_density();
    let spacing = 100.0 / density;
    let mut s = rng.uniform(0.0, spacing);
    // class weights per theme over [building, traffic light, pedestrian,
    // tree, vehicle]
    let weights: [f64; 5] = match theme {
        Theme::Desert => [0.10, 0.08, 0.04, 0.62, 0.16],
        Theme::Suburb => [0.34, 0.12, 0.12, 0.28, 0.14],
        Theme::Mountain => [0.08, 0.05, 0.04, 0.75, 0.08],
    };
    let classes: [u8; 5] = [3, 4, 5, 6, 8];
    while s < total {
        let side = if rng.next_f64() < 0.5 { 1.0 } else { -1.0 };
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut class = 6u8;
        for (w, c) in weights.iter().zip(classes) {
            acc += w;
            if u < acc {
                class = c;
                break;
            }
        }
        let (width, height, lat_lo, lat_hi) = match class {
            3 => (rng.uniform(8.0, 16.0), rng.uniform(6.0, 12.0), 14.0, 30.0),
            4 => (0.8, 4.5, 4.0, 6.0),
            5 => (0.6, 1.75, 3.6, 5.5),
            6 => (rng.uniform(2.5, 5.0), rng.uniform(3.0, 7.0), 7.0, 24.0),
            _ => (1.9, 1.5, 4.2, 6.5),
        };
        let lateral = side * rng.uniform(lat_lo, lat_hi);
        scenery.push(SceneryItem {
            s: s + rng.uniform(-0.3, 0.3) * spacing,
            lateral,
            class,
            width,
            height,
        });
        s += spacing * rng.uniform(0.7, 1.3);
    }
    for item in scenery.iter_mut() {
        if item.s < 0.0 {
            item.s += total;
        }
        if item.s >= total {
            item.s -= total;
        }
    }

    TrackSpec {
        seed,
        theme,
        lane_width: 4.0,
        segments,
        cumulative,
        total_length: total,
        scenery,
        inclination_phase: rng.uniform(0.0, 2.0 * std::f64::consts::PI),
    }
}

/// A synthetic straight "track" used by rendering tests; a single long
/// line segment, no scenery.
pub fn straight_track(length: f64, theme: Theme) -> TrackSpec {
    TrackSpec {
        seed: 0,
        theme,
        lane_width: 4.0,
        segments: vec![Segment {
            start: [-length / 2.0, 0.0],
            heading: 0.0,
            length,
            curvature: 0.0,
        }],
        cumulative: vec![0.0],
        total_length: length,
        scenery: Vec::new(),
        inclination_phase: 0.0,
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm2(a: [f64; 2]) -> f64 {
    (a[0] * a[0] + a[1] * a[1]).sqrt()
}

fn heading_of(a: [f64; 2]) -> f64 {
    a[1].atan2(a[0])
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
