//! 3-DoF point-foot leg kinematics and the leg-odometry measurements.
//!
//! Each leg is a serial chain: abduction about the body x-axis at the hip,
//! then hip pitch and knee pitch about the (abducted) y-axis. Feet are
//! numbered `[FL, FR, RL, RR]`. Odometry inverts the stance-foot kinematics:
//! with feet pinned to the ground, the trunk moves opposite to the averaged
//! foot motion.

use nalgebra::{Matrix3, SVector, Vector3};

use crate::error::CoreError;
use crate::rigid_body::{FootPositionsBody, N_FEET};
use crate::scalar::Real;
use crate::state::{rot_x, rot_y, Rotation};

pub const FRONT_LEFT: usize = 0;
pub const FRONT_RIGHT: usize = 1;
pub const REAR_LEFT: usize = 2;
pub const REAR_RIGHT: usize = 3;

/// Joint count across all legs.
pub const JOINT_DIM: usize = 3 * N_FEET;

/// Hip placement and link lengths for all four legs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegGeometry<T: Real> {
    /// Hip position relative to the CoM, body frame, per leg.
    pub hip_offsets: [Vector3<T>; N_FEET],
    /// Signed abduction link offset along the abducted y-axis, per leg
    /// (+L1 for left legs, −L1 for right legs).
    pub abduction_offset: [T; N_FEET],
    /// Thigh length, m.
    pub l2: T,
    /// Shank length, m.
    pub l3: T,
}

impl<T: Real> LegGeometry<T> {
    /// Four mirrored legs from half-spacings `hx`, `hy` and link lengths.
    pub fn symmetric(hx: T, hy: T, l1: T, l2: T, l3: T) -> Result<Self, CoreError> {
        if l1 < T::zero() || l2 <= T::zero() || l3 <= T::zero() {
            return Err(CoreError::InvalidParameter(
                "link lengths must be positive".into(),
            ));
        }
        Ok(Self {
            hip_offsets: [
                Vector3::new(hx, hy, T::zero()),
                Vector3::new(hx, -hy, T::zero()),
                Vector3::new(-hx, hy, T::zero()),
                Vector3::new(-hx, -hy, T::zero()),
            ],
            abduction_offset: [l1, -l1, l1, -l1],
            l2,
            l3,
        })
    }

    /// Longest reach from the hip; targets beyond this are unreachable.
    pub fn max_reach(&self) -> T {
        self.l2 + self.l3
    }
}

/// Joint encoder positions and velocities, three per leg.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSample<T: Real> {
    pub theta: SVector<T, JOINT_DIM>,
    pub theta_dot: SVector<T, JOINT_DIM>,
}

impl<T: Real> JointSample<T> {
    pub fn zero() -> Self {
        Self {
            theta: SVector::zeros(),
            theta_dot: SVector::zeros(),
        }
    }

    pub fn leg_angles(&self, leg: usize) -> Vector3<T> {
        self.theta.fixed_rows::<3>(3 * leg).into()
    }

    pub fn leg_rates(&self, leg: usize) -> Vector3<T> {
        self.theta_dot.fixed_rows::<3>(3 * leg).into()
    }
}

/// Reference stance/swing flags per foot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ContactRef {
    pub flags: [bool; N_FEET],
}

impl ContactRef {
    pub fn new(flags: [bool; N_FEET]) -> Self {
        Self { flags }
    }

    pub fn all_stance() -> Self {
        Self { flags: [true; 4] }
    }

    pub fn flight() -> Self {
        Self { flags: [false; 4] }
    }

    pub fn is_stance(&self, leg: usize) -> bool {
        self.flags[leg]
    }

    /// Number of feet in contact, `n_c`.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&c| c).count()
    }
}

/// Body-frame foot position from one leg's joint angles.
pub fn forward_kinematics<T: Real>(
    theta_leg: &Vector3<T>,
    geom: &LegGeometry<T>,
    leg: usize,
) -> Vector3<T> {
    let shank = Vector3::new(T::zero(), T::zero(), -geom.l3);
    let thigh = Vector3::new(T::zero(), T::zero(), -geom.l2);
    let abduction = Vector3::new(T::zero(), geom.abduction_offset[leg], T::zero());
    geom.hip_offsets[leg]
        + rot_x(theta_leg.x) * (abduction + rot_y(theta_leg.y) * (thigh + rot_y(theta_leg.z) * shank))
}

/// Analytic Jacobian `∂p/∂θ` of [`forward_kinematics`].
pub fn leg_jacobian<T: Real>(
    theta_leg: &Vector3<T>,
    geom: &LegGeometry<T>,
    leg: usize,
) -> Matrix3<T> {
    let hip = geom.hip_offsets[leg];
    let rx = rot_x(theta_leg.x);
    let pitch_axis = rx * Vector3::y();

    let joint2 = hip + rx * Vector3::new(T::zero(), geom.abduction_offset[leg], T::zero());
    let joint3 = joint2 + rx * rot_y(theta_leg.y) * Vector3::new(T::zero(), T::zero(), -geom.l2);
    let foot = forward_kinematics(theta_leg, geom, leg);

    let col1 = Vector3::x().cross(&(foot - hip));
    let col2 = pitch_axis.cross(&(foot - joint2));
    let col3 = pitch_axis.cross(&(foot - joint3));
    Matrix3::from_columns(&[col1, col2, col3])
}

/// Body-frame foot positions for all legs.
pub fn foot_positions<T: Real>(
    joints: &JointSample<T>,
    geom: &LegGeometry<T>,
) -> FootPositionsBody<T> {
    FootPositionsBody::new(std::array::from_fn(|leg| {
        forward_kinematics(&joints.leg_angles(leg), geom, leg)
    }))
}

/// Stacked body-frame foot velocities `ṗ^i = J(θ^i) θ̇^i`.
pub fn foot_velocity<T: Real>(
    joints: &JointSample<T>,
    geom: &LegGeometry<T>,
) -> SVector<T, JOINT_DIM> {
    let mut pdot = SVector::<T, JOINT_DIM>::zeros();
    for leg in 0..N_FEET {
        let v = leg_jacobian(&joints.leg_angles(leg), geom, leg) * joints.leg_rates(leg);
        pdot.fixed_rows_mut::<3>(3 * leg).copy_from(&v);
    }
    pdot
}

/// Trunk linear velocity from stance-foot kinematics.
///
/// `omega_world` is the IMU angular velocity in the world frame; it is
/// rotated into the body frame before combining with the body-frame foot
/// positions and velocities.
pub fn trunk_velocity_odom<T: Real>(
    feet: &FootPositionsBody<T>,
    foot_velocities: &SVector<T, JOINT_DIM>,
    omega_world: &Vector3<T>,
    rotation: &Rotation<T>,
    contact: &ContactRef,
) -> Result<Vector3<T>, CoreError> {
    let n_c = contact.count();
    if n_c == 0 {
        return Err(CoreError::NoContact);
    }
    let omega_body = rotation.inverse_rotate(omega_world);
    let mut sum = Vector3::zeros();
    for leg in 0..N_FEET {
        if contact.is_stance(leg) {
            let pdot: Vector3<T> = foot_velocities.fixed_rows::<3>(3 * leg).into();
            sum += rotation.rotate(&(pdot + omega_body.cross(&feet.feet[leg])));
        }
    }
    Ok(-sum / T::of(n_c as f64))
}

/// Trunk height above the stance feet.
///
/// By default foot positions are rotated into the world frame before taking
/// the z component, so the height stays correct under roll/pitch;
/// `raw_body_z` reproduces the literal body-frame form instead.
pub fn trunk_height_odom<T: Real>(
    feet: &FootPositionsBody<T>,
    rotation: &Rotation<T>,
    contact: &ContactRef,
    raw_body_z: bool,
) -> Result<T, CoreError> {
    let n_c = contact.count();
    if n_c == 0 {
        return Err(CoreError::NoContact);
    }
    let mut sum = T::zero();
    for leg in 0..N_FEET {
        if contact.is_stance(leg) {
            sum += if raw_body_z {
                feet.feet[leg].z
            } else {
                rotation.rotate(&feet.feet[leg]).z
            };
        }
    }
    Ok(-sum / T::of(n_c as f64))
}

/// Joint angles that place the foot at a body-frame target position.
pub fn inverse_kinematics<T: Real>(
    target: &Vector3<T>,
    geom: &LegGeometry<T>,
    leg: usize,
) -> Result<Vector3<T>, CoreError> {
    let q = target - geom.hip_offsets[leg];
    let offset = geom.abduction_offset[leg];

    // Abduction: rotate about x until the lateral component equals the
    // abduction offset; pick the branch with the foot below the hip.
    let rho = (q.y * q.y + q.z * q.z).sqrt();
    if rho < offset.abs() {
        return Err(CoreError::InvalidParameter(
            "foot target inside abduction cylinder".into(),
        ));
    }
    let phi = q.z.atan2(q.y);
    let half = (offset / rho).clamp(-T::one(), T::one()).acos();
    let theta1 = [phi + half, phi - half]
        .into_iter()
        .map(|t1| {
            // Wrap into (-π, π] so the small-|θ1| preference is meaningful.
            let two_pi = T::of(2.0) * T::PI();
            let mut w = t1;
            while w > T::PI() {
                w -= two_pi;
            }
            while w <= -T::PI() {
                w += two_pi;
            }
            w
        })
        .filter(|&t1| (-t1.sin() * q.y + t1.cos() * q.z) < T::zero())
        .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .ok_or_else(|| CoreError::InvalidParameter("no downward abduction branch".into()))?;

    // Planar 2R in the abducted x-z plane.
    let x = q.x;
    let z = -theta1.sin() * q.y + theta1.cos() * q.z;
    let reach_sq = x * x + z * z;
    let (l2, l3) = (geom.l2, geom.l3);
    let cos_knee = (reach_sq - l2 * l2 - l3 * l3) / (T::of(2.0) * l2 * l3);
    if cos_knee > T::one() + T::of(1e-9) || cos_knee < -T::one() - T::of(1e-9) {
        return Err(CoreError::InvalidParameter(
            "foot target outside leg workspace".into(),
        ));
    }
    let theta3 = cos_knee.clamp(-T::one(), T::one()).acos();
    let gamma = (l3 * theta3.sin()).atan2(l2 + l3 * theta3.cos());
    let delta = (-x).atan2(-z);
    let theta2 = delta - gamma;
    Ok(Vector3::new(theta1, theta2, theta3))
}
