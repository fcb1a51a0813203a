//! Auxiliary input channels: dense optical flow between successive
//! frames and per-pixel semantic segmentation, plus the channel stacking
//! that fuses them with the RGB image into the network input.

pub mod flow;
pub mod segnet;
pub mod stack;

pub use flow::{compute_flow, FlowConfig};
pub use segnet::{train_segmentation, SegNet, SegTrainConfig, SegTrainReport};
pub use stack::{stack_channels, StackConfig};
