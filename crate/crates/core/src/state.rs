//! Canonical trunk state, frame conventions, and rotation helpers.
//!
//! The trunk state is a single 12-vector in the world frame:
//!
//! ```text
//! x = [θx, θy, θz, rx, ry, rz, ωx, ωy, ωz, vx, vy, vz]
//! ```
//!
//! Euler angles compose Z-Y-X intrinsic (yaw · pitch · roll), so
//! `R_b^w = Rz(θz) · Ry(θy) · Rx(θx)`. Angular velocity ω is expressed in the
//! world frame; body-frame consumers rotate it with `Rᵀ`.

use nalgebra::{Matrix3, SVector, Vector3};

use crate::error::CoreError;
use crate::scalar::Real;

/// Dimension of the trunk state vector.
pub const STATE_DIM: usize = 12;

/// First index of each 3-component block in the state vector.
pub const THETA: usize = 0;
pub const POS: usize = 3;
pub const OMEGA: usize = 6;
pub const VEL: usize = 9;

/// Standard gravity, m/s².
pub const GRAVITY_M_S2: f64 = 9.81;

/// Euler-angle and gravity conventions shared by every module.
///
/// Euler composition is fixed to Z-Y-X intrinsic (yaw, then pitch, then
/// roll); the round trip `euler → R → euler` is exact away from
/// |pitch| = π/2. Angles are stored unwrapped (no modulo 2π).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameConvention;

impl FrameConvention {
    pub const COMPOSITION: &'static str = "Z-Y-X intrinsic (yaw * pitch * roll)";

    pub fn gravity<T: Real>() -> T {
        T::of(GRAVITY_M_S2)
    }
}

/// Trunk pose and twist in the world frame, stored as one 12-vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrunkState<T: Real>(SVector<T, STATE_DIM>);

impl<T: Real> TrunkState<T> {
    pub fn new(theta: Vector3<T>, r: Vector3<T>, omega: Vector3<T>, v: Vector3<T>) -> Self {
        let mut x = SVector::<T, STATE_DIM>::zeros();
        x.fixed_rows_mut::<3>(THETA).copy_from(&theta);
        x.fixed_rows_mut::<3>(POS).copy_from(&r);
        x.fixed_rows_mut::<3>(OMEGA).copy_from(&omega);
        x.fixed_rows_mut::<3>(VEL).copy_from(&v);
        Self(x)
    }

    pub fn zero() -> Self {
        Self(SVector::zeros())
    }

    pub fn from_vector(x: SVector<T, STATE_DIM>) -> Self {
        Self(x)
    }

    pub fn vector(&self) -> &SVector<T, STATE_DIM> {
        &self.0
    }

    pub fn into_vector(self) -> SVector<T, STATE_DIM> {
        self.0
    }

    /// Euler angles (roll, pitch, yaw), rad.
    pub fn theta(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(THETA).into()
    }

    /// Position of the CoM, m.
    pub fn position(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(POS).into()
    }

    /// Angular velocity, world frame, rad/s.
    pub fn angular_velocity(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(OMEGA).into()
    }

    /// Linear velocity, world frame, m/s.
    pub fn velocity(&self) -> Vector3<T> {
        self.0.fixed_rows::<3>(VEL).into()
    }

    /// Body→world rotation implied by the stored Euler angles.
    pub fn rotation(&self) -> Rotation<T> {
        Rotation::from_euler(self.theta())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

/// Body→world rotation matrix `R_b^w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation<T: Real>(Matrix3<T>);

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Build from Euler angles `[roll, pitch, yaw]` with the fixed Z-Y-X
    /// intrinsic composition: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
    pub fn from_euler(theta: Vector3<T>) -> Self {
        Self(rot_z(theta.z) * rot_y(theta.y) * rot_x(theta.x))
    }

    /// Wrap an existing matrix; the caller asserts orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    /// Rotate a body-frame vector into the world frame.
    pub fn rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0 * v
    }

    /// Rotate a world-frame vector into the body frame.
    pub fn inverse_rotate(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0.transpose() * v
    }

    /// Recover `[roll, pitch, yaw]`; fails near |pitch| = π/2 where the
    /// decomposition degenerates.
    pub fn to_euler(&self) -> Result<Vector3<T>, CoreError> {
        let r = &self.0;
        let sin_pitch = -r[(2, 0)];
        let sin_pitch = sin_pitch.clamp(-T::one(), T::one());
        let pitch = sin_pitch.asin();
        if T::FRAC_PI_2() - pitch.abs() < T::of(1e-6) {
            return Err(CoreError::GimbalLock);
        }
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Ok(Vector3::new(roll, pitch, yaw))
    }

    /// Max deviation of `RᵀR` from the identity plus |det − 1|.
    pub fn orthonormality_error(&self) -> T {
        let gram = self.0.transpose() * self.0;
        let mut err = (self.0.determinant() - T::one()).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                err = err.max((gram[(i, j)] - target).abs());
            }
        }
        err
    }
}

/// Skew-symmetric matrix `[v]×` with `[v]× q = v × q`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

pub fn rot_x<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(o, z, z, z, c, -s, z, s, c)
}

pub fn rot_y<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, z, s, z, o, z, -s, z, c)
}

pub fn rot_z<T: Real>(a: T) -> Matrix3<T> {
    let (s, c) = a.sin_cos();
    let (o, z) = (T::one(), T::zero());
    Matrix3::new(c, -s, z, s, c, z, z, z, o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn skew_zero_is_zero() {
        let m = skew(&Vector3::<f64>::zeros());
        assert_eq!(m, Matrix3::zeros());
    }

    #[test]
    fn skew_unit_cross_product() {
        let m = skew(&Vector3::new(1.0, 0.0, 0.0));
        let q = Vector3::new(0.0, 1.0, 0.0);
        assert_relative_eq!(m * q, Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn skew_matches_cross_product_formula() {
        // Oracle: component formula of the cross product.
        let mut rng = SmallRng::seed_from_u64(7);
        for _ in 0..1000 {
            let v = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let q = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let cross = Vector3::new(
                v.y * q.z - v.z * q.y,
                v.z * q.x - v.x * q.z,
                v.x * q.y - v.y * q.x,
            );
            let got = skew(&v) * q;
            assert!((got - cross).norm() < 1e-12);
        }
    }

    #[test]
    fn euler_identity() {
        let r = Rotation::<f64>::from_euler(Vector3::zeros());
        assert_relative_eq!(*r.matrix(), Matrix3::identity());
    }

    #[test]
    fn pure_yaw_maps_x_to_y() {
        let r = Rotation::from_euler(Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let mapped = r.rotate(&Vector3::x());
        assert_relative_eq!(mapped, Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn euler_matches_elementary_matrix_product() {
        // Oracle: explicitly constructed elementary rotations, composed by hand.
        let elem_x = |a: f64| {
            Matrix3::new(
                1.0,
                0.0,
                0.0,
                0.0,
                a.cos(),
                -a.sin(),
                0.0,
                a.sin(),
                a.cos(),
            )
        };
        let elem_y = |a: f64| {
            Matrix3::new(
                a.cos(),
                0.0,
                a.sin(),
                0.0,
                1.0,
                0.0,
                -a.sin(),
                0.0,
                a.cos(),
            )
        };
        let elem_z = |a: f64| {
            Matrix3::new(
                a.cos(),
                -a.sin(),
                0.0,
                a.sin(),
                a.cos(),
                0.0,
                0.0,
                0.0,
                1.0,
            )
        };
        let mut rng = SmallRng::seed_from_u64(11);
        for _ in 0..1000 {
            let theta = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let expected = elem_z(theta.z) * elem_y(theta.y) * elem_x(theta.x);
            let got = Rotation::from_euler(theta);
            assert!((got.matrix() - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rotation_to_euler_identity() {
        let angles = Rotation::<f64>::identity().to_euler().unwrap();
        assert_relative_eq!(angles, Vector3::zeros());
    }

    #[test]
    fn rotation_to_euler_round_trip() {
        let theta = Vector3::new(0.1, 0.2, 0.3);
        let back = Rotation::from_euler(theta).to_euler().unwrap();
        assert_relative_eq!(back, theta, epsilon = 1e-9);
    }

    #[test]
    fn near_gimbal_pitch_is_an_error() {
        let theta = Vector3::new(0.2, std::f64::consts::FRAC_PI_2 - 1e-8, -0.4);
        let r = Rotation::from_euler(theta);
        assert_eq!(r.to_euler(), Err(CoreError::GimbalLock));
    }

    #[test]
    fn random_rotations_are_orthonormal() {
        let mut rng = SmallRng::seed_from_u64(19);
        for _ in 0..10_000 {
            let theta = Vector3::from_fn(|_, _| rng.random_range(-6.0..6.0));
            let r = Rotation::from_euler(theta);
            assert!(r.orthonormality_error() < 1e-10);
        }
    }

    #[test]
    fn state_vector_layout() {
        let x = TrunkState::new(
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(4.0, 5.0, 6.0),
            Vector3::new(7.0, 8.0, 9.0),
            Vector3::new(10.0, 11.0, 12.0),
        );
        let v = x.vector();
        for i in 0..12 {
            assert_eq!(v[i], (i + 1) as f64);
        }
        assert_eq!(x.theta(), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(x.velocity(), Vector3::new(10.0, 11.0, 12.0));
    }

    proptest! {
        #[test]
        fn skew_is_antisymmetric(vx in -10.0f64..10.0, vy in -10.0f64..10.0, vz in -10.0f64..10.0) {
            let m = skew(&Vector3::new(vx, vy, vz));
            let sum = m + m.transpose();
            prop_assert!(sum.iter().all(|&c| c == 0.0));
        }

        #[test]
        fn euler_round_trip_within_pitch_range(
            roll in -3.0f64..3.0,
            pitch in -1.4f64..1.4,
            yaw in -3.0f64..3.0,
        ) {
            let theta = Vector3::new(roll, pitch, yaw);
            let back = Rotation::from_euler(theta).to_euler().unwrap();
            // Roll/yaw may come back shifted by 2π for |angle| > π; compare modulo.
            for i in 0..3 {
                let mut d = (back[i] - theta[i]).abs();
                d = d.min((d - 2.0 * std::f64::consts::PI).abs());
                prop_assert!(d < 1e-9);
            }
        }
    }
}
