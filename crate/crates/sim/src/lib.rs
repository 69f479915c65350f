//! Desk-scale quadruped trot simulator.
//!
//! Generates the ground truth and sensor data a hardware rig would provide:
//! a trot-gait reference, stance-force allocation, single-rigid-body ground
//! truth, leg inverse kinematics, sensor noise, slip/compliance injection,
//! procedural depth rendering, and a binary dataset format with a
//! human-readable manifest.
//!
//! Everything is a pure function of [`SimConfig`] (seed included); identical
//! configs produce byte-identical datasets.

pub mod config;
pub mod dataset;
pub mod depth;
pub mod error;
pub mod gait;
pub mod kv;
pub mod reference;
pub mod simulate;
pub mod terrain;

pub use config::{CameraConfig, CommandProfile, GaitConfig, NoiseLevels, RobotConfig, SimConfig,
    TerrainConfig};
pub use dataset::{read_dataset, write_dataset, Dataset};
pub use error::SimError;
pub use simulate::simulate;
