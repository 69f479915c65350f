//! Sensor data carried through the pipeline, one frame per control tick.

use std::sync::Arc;

use nalgebra::Vector3;

use crate::leg::{ContactRef, JointSample};
use crate::rigid_body::GroundReactionForces;
use crate::scalar::Real;
use crate::state::TrunkState;

/// One IMU reading.
///
/// `theta` and `omega` follow the state conventions (world frame);
/// `accel` is the body-frame specific force (gravity included, so a robot at
/// rest reads +9.81 on z); `ang_accel` is the differentiated world-frame
/// angular velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample<T: Real> {
    pub theta: Vector3<T>,
    pub omega: Vector3<T>,
    pub accel: Vector3<T>,
    pub ang_accel: Vector3<T>,
}

impl<T: Real> ImuSample<T> {
    pub fn zero() -> Self {
        Self {
            theta: Vector3::zeros(),
            omega: Vector3::zeros(),
            accel: Vector3::zeros(),
            ang_accel: Vector3::zeros(),
        }
    }
}

/// Grayscale depth image with values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub height: usize,
    pub width: usize,
    /// Row-major pixels.
    pub pixels: Vec<f32>,
}

impl DepthImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Self {
        assert_eq!(pixels.len(), height * width, "pixel buffer size mismatch");
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn in_unit_range(&self) -> bool {
        self.pixels.iter().all(|&p| (0.0..=1.0).contains(&p))
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }
}

/// A depth image plus the refresh counter used for sample-and-hold: frames
/// sharing a `seq` carry the same (repeated) camera sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame {
    pub seq: u64,
    pub image: Arc<DepthImage>,
}

/// Everything the estimator sees at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame<T: Real> {
    /// Time since trajectory start, s.
    pub t: T,
    pub joints: JointSample<T>,
    pub imu: ImuSample<T>,
    /// Reference contact flags (stance schedule, not measured contact).
    pub contact: ContactRef,
    /// Controller force output for this tick, world frame.
    pub forces: GroundReactionForces<T>,
    /// Depth sample, held at the camera rate.
    pub depth: Option<DepthFrame>,
    /// Mocap surrogate of the true trunk state, when recorded.
    pub truth: Option<TrunkState<T>>,
}
