//! Procedural 2-D driving world: track generation, front-view rendering
//! with ground-truth segmentation, kinematic bicycle dynamics, a
//! pure-pursuit scripted expert, demonstration recording, and closed-loop
//! rollouts with failure detection.
//!
//! World conventions: planar coordinates in meters with y pointing down
//! (screen-style), headings measured clockwise from +x, so a positive
//! steering angle turns the vehicle to the right and a positive lateral
//! offset sits to the left of the centerline. Positive curvature bends a
//! segment to the right.

pub mod dataset;
pub mod dynamics;
pub mod expert;
pub mod render;
pub mod rollout;
pub mod track;
pub mod types;

pub use dataset::{read_dataset, write_dataset, Dataset, DatasetMeta, RawRecord};
pub use dynamics::{step_dynamics, DynamicsConfig};
pub use expert::PurePursuit;
pub use render::{render_frame, RenderConfig};
pub use rollout::{closed_loop_rollout, Controller, EpisodeLog, RolloutConfig};
pub use track::{generate_track, Theme, TrackSpec};
pub use types::{Frame, Kinematics, VehicleState};
