//! The traffic-signal-aware spatio-temporal graph network.
//!
//! Two feature streams (appearance + class, location + class) each pass
//! through a stack of ST-Graph layers. The target pedestrian's row of both
//! streams is concatenated per frame, encoded by an LSTM, passed through a
//! one-hidden-layer FCN and read out by an intention head and a trajectory
//! head.

mod config;
pub mod layers;
mod model;
mod params;

pub use config::ModelConfig;
pub use model::{absolute_trajectory, normalized_offsets, ForwardOptions, Model, Prediction, Recorded};
pub use params::{param_groups, ModelParams, ParamGroup};
