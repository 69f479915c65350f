//! Core math for quadruped trunk-state estimation.
//!
//! The trunk is modeled as a single rigid body actuated by ground-reaction
//! forces at the four feet. This crate provides the shared state/frame
//! conventions, the discrete-time rigid-body model, 3-DoF leg kinematics and
//! odometry, the model-based Kalman filter built on top of them, and a
//! per-step stance-force allocator that stands in for a horizon MPC when
//! synthesizing data.
//!
//! All math is generic over the scalar type via [`Real`]; the concrete
//! aliases at the crate root pin the shipped pipeline to `f64`.

pub mod allocator;
pub mod error;
pub mod kalman;
pub mod leg;
pub mod rigid_body;
pub mod scalar;
pub mod sensor;
pub mod state;

pub use error::CoreError;
pub use scalar::Real;

/// Scalar used by the shipped estimator end to end.
pub type Scalar = f64;

pub type TrunkState = state::TrunkState<Scalar>;
pub type Rotation = state::Rotation<Scalar>;
pub type RobotPhysicalParams = rigid_body::RobotPhysicalParams<Scalar>;
pub type GroundReactionForces = rigid_body::GroundReactionForces<Scalar>;
pub type FootPositionsBody = rigid_body::FootPositionsBody<Scalar>;
pub type LegGeometry = leg::LegGeometry<Scalar>;
pub type JointSample = leg::JointSample<Scalar>;
pub type ContactRef = leg::ContactRef;
pub type ImuSample = sensor::ImuSample<Scalar>;
pub type SensorFrame = sensor::SensorFrame<Scalar>;
pub type DepthImage = sensor::DepthImage;
pub type KalmanBelief = kalman::KalmanBelief<Scalar>;
pub type NoiseConfig = kalman::NoiseConfig<Scalar>;
pub type Measurement = kalman::Measurement<Scalar>;
pub type KalmanFilter = kalman::KalmanFilter<Scalar>;
pub type AllocatorParams = allocator::AllocatorParams<Scalar>;
