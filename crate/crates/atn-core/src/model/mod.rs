//! The fused steering network: stacked-channel CNN backbone, kinematics
//! concatenation, windowed LSTM, and the fully connected head, plus its
//! ablation variants, the pretext-task transfer path, window assembly,
//! the training loop, and the closed-loop controller wrapper.

pub mod config;
pub mod controller;
pub mod features;
pub mod net;
pub mod pretext;
pub mod train;
pub mod windows;

pub use config::{AtnConfig, Backbone, Variant};
pub use controller::AtnController;
pub use features::{build_frame_store, FrameStore, WindowDataset};
pub use net::AtnModel;
pub use pretext::{pretext_pretrain, PretextConfig, PretextReport};
pub use train::{train_policy, EpochStats, TrainConfig, TrainReport};
pub use windows::window_indices;
