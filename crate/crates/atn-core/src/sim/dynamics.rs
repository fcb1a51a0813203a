//! Kinematic bicycle model, forward-Euler integrated.

use super::types::VehicleState;

#[derive(Clone, Copy, Debug)]
pub struct DynamicsConfig {
    /// Wheelbase, meters.
    pub wheelbase: f64,
    /// Steering actuator limit, degrees.
    pub max_steering_deg: f64,
    /// Commanded-acceleration limit, m/s^2.
    pub max_accel: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            wheelbase: 2.7,
            max_steering_deg: 45.0,
            max_accel: 5.0,
        }
    }
}

/// One Euler step:
///   x += v cos(theta) dt
///   y += v sin(theta) dt
///   theta += (v / L) tan(delta) dt
///   v = max(0, v + a dt)
/// with the steering command clamped to the actuator range. Positive
/// steering turns right (headings are clockwise).
pub fn step_dynamics(
    state: &VehicleState,
    steering_cmd_deg: f64,
    accel_cmd: f64,
    dt: f64,
    config: &DynamicsConfig,
) -> VehicleState {
    let delta_deg = steering_cmd_deg.clamp(-config.max_steering_deg, config.max_steering_deg);
    let accel = accel_cmd.clamp(-config.max_accel, config.max_accel);
    let delta = delta_deg.to_radians();
    let v = state.speed;
    VehicleState {
        x: state.x + v * state.heading.cos() * dt,
        y: state.y + v * state.heading.sin() * dt,
        heading: state.heading + v / config.wheelbase * delta.tan() * dt,
        speed: (v + accel * dt).max(0.0),
        acceleration: accel,
        steering_deg: delta_deg,
    }
}

/// Turn radius of a constant steering angle: L / tan(delta).
pub fn turn_radius(steering_deg: f64, wheelbase: f64) -> f64 {
    wheelbase / steering_deg.to_radians().tan().abs()
}
