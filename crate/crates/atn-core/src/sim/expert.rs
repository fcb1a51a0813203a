//! Scripted pure-pursuit expert: steers toward a lookahead point on the
//! centerline. Stands in for human demonstration drivers.

use super::track::TrackSpec;
use super::types::VehicleState;

#[derive(Clone, Copy, Debug)]
pub struct PurePursuit {
    /// Lookahead distance along the centerline, meters.
    pub lookahead: f64,
    pub wheelbase: f64,
    pub max_steering_deg: f64,
}

impl Default for PurePursuit {
    fn default() -> Self {
        PurePursuit {
            lookahead: 6.0,
            wheelbase: 2.7,
            max_steering_deg: 45.0,
        }
    }
}

impl PurePursuit {
    /// Steering command in degrees (positive right). `s_hint` is the
    /// caller's running arc-length estimate; pass the last returned value
    /// (or the projection) to keep the search local.
    pub fn steering(&self, track: &TrackSpec, state: &VehicleState, s_hint: f64) -> (f64, f64) {
        let (s, _offset) = track.project_near([state.x, state.y], s_hint, 30.0);
        let (target, _, _) = track.sample(s + self.lookahead);
        let dx = target[0] - state.x;
        let dy = target[1] - state.y;
        let forward = dx * state.heading.cos() + dy * state.heading.sin();
        // positive when the target lies to the vehicle's right
        let right = -dx * state.heading.sin() + dy * state.heading.cos();
        let alpha = right.atan2(forward.max(1e-6));
        let ld = (dx * dx + dy * dy).sqrt().max(1e-6);
        let delta = (2.0 * self.wheelbase * alpha.sin() / ld).atan();
        let deg = delta
            .to_degrees()
            .clamp(-self.max_steering_deg, self.max_steering_deg);
        (deg, s)
    }
}
