//! Online multi-object tracking on 360° panoramas, with optional LiDAR
//! fusion for 3D locations.

pub mod affinity;
pub mod association;
pub mod config;
pub mod detection;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod kalman;
pub mod matrix;
pub mod pano_box;
pub mod pipeline;
pub mod plot;
pub mod selftest;
pub mod synthetic;
pub mod tracker;
pub mod trajectory;

pub use error::{Error, Result};
