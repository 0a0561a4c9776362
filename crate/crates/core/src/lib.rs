//! Rolling-shutter + event video toolkit: simulate RS frames and event
//! streams from global-shutter video, and reconstruct arbitrary-frame-rate
//! GS video from two RS frames plus events by estimating and refining a
//! dense per-bin displacement field.

pub mod bandwidth;
pub mod error;
pub mod event;
pub mod exposure;
pub mod field;
pub mod frame;
pub mod io;
pub mod lk;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod reconstruct;
pub mod synth;
pub mod voxel;

pub use error::{Error, Result};
