//! Vehicle state, the kinematics feature vector, and recorded frames.

use crate::image::{FlowField, ImageBuf, SegMap};

/// Planar vehicle state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    /// Position in meters (y points down).
    pub x: f64,
    pub y: f64,
    /// Heading in radians, clockwise from +x.
    pub heading: f64,
    /// Forward speed, m/s (never negative).
    pub speed: f64,
    /// Longitudinal acceleration, m/s^2.
    pub acceleration: f64,
    /// Current steering angle in degrees, positive to the right.
    pub steering_deg: f64,
}

impl VehicleState {
    pub fn at(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        VehicleState {
            x,
            y,
            heading,
            speed,
            acceleration: 0.0,
            steering_deg: 0.0,
        }
    }

    pub fn forward(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Unit vector pointing to the vehicle's left.
    pub fn left(&self) -> [f64; 2] {
        [self.heading.sin(), -self.heading.cos()]
    }
}

/// The five-component vehicle-information vector fed to the network,
/// in physical units. Ranges (for normalization and clamping):
/// acceleration [0,5] m/s^2, speed [0,60] mph, heading [-45,45] degrees
/// (relative to the road tangent), distance to curb [-2,2] m (positive
/// left), previous steering [-45,45] degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub acceleration: f32,
    pub speed_mph: f32,
    pub heading_deg: f32,
    pub distance_to_curb: f32,
    pub previous_steering_deg: f32,
}

impl Kinematics {
    pub const DIM: usize = 5;

    pub fn zeros() -> Self {
        Kinematics {
            acceleration: 0.0,
            speed_mph: 0.0,
            heading_deg: 0.0,
            distance_to_curb: 0.0,
            previous_steering_deg: 0.0,
        }
    }

    pub fn to_array(self) -> [f32; 5] {
        [
            self.acceleration,
            self.speed_mph,
            self.heading_deg,
            self.distance_to_curb,
            self.previous_steering_deg,
        ]
    }

    pub fn from_array(a: [f32; 5]) -> Self {
        Kinematics {
            acceleration: a[0],
            speed_mph: a[1],
            heading_deg: a[2],
            distance_to_curb: a[3],
            previous_steering_deg: a[4],
        }
    }

    /// Normalize onto [-1,1] (sign-symmetric components) or [0,1]
    /// (one-sided components), clamping out-of-range inputs.
    pub fn normalized(&self) -> [f32; 5] {
        [
            (self.acceleration / 5.0).clamp(0.0, 1.0),
            (self.speed_mph / 60.0).clamp(0.0, 1.0),
            (self.heading_deg / 45.0).clamp(-1.0, 1.0),
            (self.distance_to_curb / 2.0).clamp(-1.0, 1.0),
            (self.previous_steering_deg / 45.0).clamp(-1.0, 1.0),
        ]
    }

    /// The mirrored-world counterpart: sign-sensitive components negate,
    /// speed and acceleration are unchanged.
    pub fn flipped(&self) -> Self {
        Kinematics {
            acceleration: self.acceleration,
            speed_mph: self.speed_mph,
            heading_deg: -self.heading_deg,
            distance_to_curb: -self.distance_to_curb,
            previous_steering_deg: -self.previous_steering_deg,
        }
    }
}

/// One timestep of recorded driving after preprocessing: the cropped
/// frame, its segmentation map and flow field, the kinematics vector and
/// the expert steering label.
#[derive(Clone, Debug)]
pub struct Frame {
    pub image: ImageBuf,
    pub seg: SegMap,
    pub flow: FlowField,
    pub kinematics: Kinematics,
    pub steering_deg: f32,
}

impl Frame {
    /// Mirror the whole sample: image-like fields mirror (flow u negates),
    /// steering negates, sign-sensitive kinematics negate.
    pub fn flipped(&self) -> Frame {
        Frame {
            image: self.image.flipped_horizontal(),
            seg: self.seg.flipped_horizontal(),
            flow: self.flow.flipped_horizontal(),
            kinematics: self.kinematics.flipped(),
            steering_deg: -self.steering_deg,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_frame(seed: u64) -> Frame {
        let mut rng = Rng::new(seed);
        let mut image = ImageBuf::new(4, 6);
        for v in image.data.iter_mut() {
            *v = rng.next_f32();
        }
        let mut seg = SegMap::new(4, 6);
        for c in seg.classes.iter_mut() {
            *c = rng.below(9) as u8;
        }
        let mut flow = FlowField::zeros(4, 6);
        for i in 0..24 {
            flow.u[i] = rng.next_f32() - 0.5;
            flow.v[i] = rng.next_f32() - 0.5;
        }
        Frame {
            image,
            seg,
            flow,
            kinematics: Kinematics {
                acceleration: 1.0,
                speed_mph: 33.0,
                heading_deg: 5.0,
                distance_to_curb: -0.4,
                previous_steering_deg: 2.5,
            },
            steering_deg: 12.0,
        }
    }

    #[test]
    fn flip_negates_steering_and_signed_kinematics() {
        let f = random_frame(1);
        let g = f.flipped();
        assert_eq!(g.steering_deg, -12.0);
        assert_eq!(g.kinematics.heading_deg, -5.0);
        assert_eq!(g.kinematics.distance_to_curb, 0.4);
        assert_eq!(g.kinematics.previous_steering_deg, -2.5);
        assert_eq!(g.kinematics.speed_mph, 33.0);
        assert_eq!(g.kinematics.acceleration, 1.0);
    }

    #[test]
    fn flip_is_an_involution_on_every_field() {
        let f = random_frame(2);
        let g = f.flipped().flipped();
        assert_eq!(f.image, g.image);
        assert_eq!(f.seg, g.seg);
        assert_eq!(f.flow, g.flow);
        assert_eq!(f.kinematics, g.kinematics);
        assert_eq!(f.steering_deg, g.steering_deg);
    }

    #[test]
    fn normalization_maps_table_ranges_onto_unit_intervals() {
        let k = Kinematics {
            acceleration: 5.0,
            speed_mph: 30.0,
            heading_deg: -45.0,
            distance_to_curb: 1.0,
            previous_steering_deg: 90.0, // out of range, clamps
        };
        let n = k.normalized();
        assert_eq!(n[0], 1.0);
        assert_eq!(n[1], 0.5);
        assert_eq!(n[2], -1.0);
        assert_eq!(n[3], 0.5);
        assert_eq!(n[4], 1.0);
    }
}
