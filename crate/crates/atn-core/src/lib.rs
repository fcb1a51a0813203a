//! End-to-end steering-angle prediction with auxiliary tasks, on a desk
//! scale: a small differentiable-kernel engine, a procedural 2-D driving
//! simulator with a scripted expert, the preprocessing/augmentation
//! pipeline, segmentation and optical-flow input channels, the fused
//! convolutional/recurrent policy network, and the offline/closed-loop
//! evaluation harness with its ablation runner.

pub mod ablation;
pub mod augment;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod image;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sim;
pub mod tensor;
pub mod vision;

pub use error::{Error, Result};
