pub mod autodiff;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod net;
pub mod scene;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
