//! Inner-speech EEG classification toolkit.

pub mod data;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod linalg;
pub mod neural;
pub mod pipeline;
pub mod scalar;
pub mod shallow;
pub mod synth;

pub use scalar::Real;
