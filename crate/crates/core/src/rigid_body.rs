//! Discrete-time single-rigid-body trunk dynamics under stance forces.
//!
//! The continuous model is linearized around the current orientation and
//! discretized with one explicit Euler step:
//!
//! ```text
//! x_{k+1} = (I₁₂ + A ΔT) x_k + (B ΔT) f_k + g ΔT
//! ```
//!
//! `A` has exactly two nonzero blocks — `Rᵀ` mapping world ω into Euler rates
//! and `I₃` mapping v into ṙ — so `A² = 0` and `e^{AΔT} = I + AΔT` exactly.
//! `B` maps each stance-foot force through the world-frame inertia (torque)
//! and the total mass (linear acceleration).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::CoreError;
use crate::leg::ContactRef;
use crate::scalar::Real;
use crate::state::{skew, FrameConvention, Rotation, TrunkState, OMEGA, POS, STATE_DIM, THETA, VEL};

/// Number of feet; the force vector stacks 3 components per foot.
pub const N_FEET: usize = 4;
pub const FORCE_DIM: usize = 3 * N_FEET;

/// Mass and body-frame inertia of the trunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotPhysicalParams<T: Real> {
    /// Total mass, kg.
    pub mass: T,
    /// Inertia tensor about the CoM in the body frame, kg·m².
    pub inertia_body: Matrix3<T>,
}

impl<T: Real> RobotPhysicalParams<T> {
    pub fn new(mass: T, inertia_body: Matrix3<T>) -> Result<Self, CoreError> {
        if mass <= T::zero() {
            return Err(CoreError::InvalidParameter("mass must be positive".into()));
        }
        let asym = (inertia_body - inertia_body.transpose()).norm();
        if asym > T::of(1e-9) {
            return Err(CoreError::InvalidParameter(
                "inertia tensor must be symmetric".into(),
            ));
        }
        if inertia_body.symmetric_eigenvalues().min() <= T::zero() {
            return Err(CoreError::InvalidParameter(
                "inertia tensor must be positive definite".into(),
            ));
        }
        Ok(Self { mass, inertia_body })
    }

    /// World-frame inertia `Î = R I_body Rᵀ`.
    pub fn world_inertia(&self, rotation: &Rotation<T>) -> Matrix3<T> {
        rotation.matrix() * self.inertia_body * rotation.matrix().transpose()
    }

    /// Inverse of the world-frame inertia with a determinant guard.
    pub fn world_inertia_inv(&self, rotation: &Rotation<T>) -> Result<Matrix3<T>, CoreError> {
        let inertia = self.world_inertia(rotation);
        let det = inertia.determinant();
        if det.abs() < T::of(1e-12) {
            return Err(CoreError::SingularInertia {
                determinant: det.to_f64_lossy(),
            });
        }
        inertia
            .try_inverse()
            .ok_or(CoreError::SingularInertia { determinant: 0.0 })
    }
}

/// World-frame ground-reaction forces, stacked `[f¹; f²; f³; f⁴]`, N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundReactionForces<T: Real>(SVector<T, FORCE_DIM>);

impl<T: Real> GroundReactionForces<T> {
    pub fn zero() -> Self {
        Self(SVector::zeros())
    }

    pub fn from_feet(feet: [Vector3<T>; N_FEET]) -> Self {
        let mut f = SVector::<T, FORCE_DIM>::zeros();
        for (i, foot) in feet.iter().enumerate() {
            f.fixed_rows_mut::<3>(3 * i).copy_from(foot);
        }
        Self(f)
    }

    pub fn from_vector(f: SVector<T, FORCE_DIM>) -> Self {
        Self(f)
    }

    pub fn vector(&self) -> &SVector<T, FORCE_DIM> {
        &self.0
    }

    pub fn foot(&self, i: usize) -> Vector3<T> {
        self.0.fixed_rows::<3>(3 * i).into()
    }

    /// Copy with swing-foot entries forced to exactly zero.
    pub fn masked(&self, contact: &ContactRef) -> Self {
        let mut f = self.0;
        for i in 0..N_FEET {
            if !contact.is_stance(i) {
                f.fixed_rows_mut::<3>(3 * i).fill(T::zero());
            }
        }
        Self(f)
    }

    pub fn total(&self) -> Vector3<T> {
        (0..N_FEET).fold(Vector3::zeros(), |acc, i| acc + self.foot(i))
    }
}

/// Foot positions relative to the trunk CoM, body frame, m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootPositionsBody<T: Real> {
    pub feet: [Vector3<T>; N_FEET],
}

impl<T: Real> FootPositionsBody<T> {
    pub fn new(feet: [Vector3<T>; N_FEET]) -> Self {
        Self { feet }
    }

    /// All feet within the kinematic workspace bound (m).
    pub fn within_workspace(&self, bound: T) -> bool {
        self.feet.iter().all(|p| p.norm() <= bound)
    }
}

/// Discrete-dynamics `A` matrix for the current orientation.
pub fn build_a<T: Real>(rotation: &Rotation<T>) -> SMatrix<T, STATE_DIM, STATE_DIM> {
    let mut a = SMatrix::<T, STATE_DIM, STATE_DIM>::zeros();
    a.fixed_view_mut::<3, 3>(THETA, OMEGA)
        .copy_from(&rotation.matrix().transpose());
    a.fixed_view_mut::<3, 3>(POS, VEL)
        .copy_from(&Matrix3::identity());
    a
}

/// Discrete-dynamics `B` matrix mapping stacked foot forces into the state.
pub fn build_b<T: Real>(
    params: &RobotPhysicalParams<T>,
    rotation: &Rotation<T>,
    feet: &FootPositionsBody<T>,
) -> Result<SMatrix<T, STATE_DIM, FORCE_DIM>, CoreError> {
    let inertia_inv = params.world_inertia_inv(rotation)?;
    let inv_mass = Matrix3::identity() / params.mass;
    let mut b = SMatrix::<T, STATE_DIM, FORCE_DIM>::zeros();
    for (i, p) in feet.feet.iter().enumerate() {
        b.fixed_view_mut::<3, 3>(OMEGA, 3 * i)
            .copy_from(&(inertia_inv * skew(p)));
        b.fixed_view_mut::<3, 3>(VEL, 3 * i).copy_from(&inv_mass);
    }
    Ok(b)
}

/// Gravity vector of the discrete model: only v̇_z is affected.
pub fn gravity_vector<T: Real>() -> SVector<T, STATE_DIM> {
    let mut g = SVector::<T, STATE_DIM>::zeros();
    g[VEL + 2] = -FrameConvention::gravity::<T>();
    g
}

/// One explicit-Euler step of the single-rigid-body model, evaluated block
/// by block. The orientation used for `A`/`B` comes from the state itself.
pub fn dyn_step<T: Real>(
    x: &TrunkState<T>,
    forces: &GroundReactionForces<T>,
    feet: &FootPositionsBody<T>,
    params: &RobotPhysicalParams<T>,
    dt: T,
) -> Result<TrunkState<T>, CoreError> {
    dyn_step_with_rotation(x, forces, feet, params, &x.rotation(), dt)
}

/// [`dyn_step`] with the linearization rotation supplied by the caller;
/// the step is exactly linear in `(x, f)` for a fixed rotation.
pub fn dyn_step_with_rotation<T: Real>(
    x: &TrunkState<T>,
    forces: &GroundReactionForces<T>,
    feet: &FootPositionsBody<T>,
    params: &RobotPhysicalParams<T>,
    rotation: &Rotation<T>,
    dt: T,
) -> Result<TrunkState<T>, CoreError> {
    let inertia_inv = params.world_inertia_inv(rotation)?;

    let mut torque = Vector3::zeros();
    let mut total_force = Vector3::zeros();
    for (i, p) in feet.feet.iter().enumerate() {
        let f = forces.foot(i);
        torque += inertia_inv * (skew(p) * f);
        total_force += f;
    }
    let gravity = Vector3::new(T::zero(), T::zero(), -FrameConvention::gravity::<T>());

    let theta = x.theta() + rotation.inverse_rotate(&x.angular_velocity()) * dt;
    let r = x.position() + x.velocity() * dt;
    let omega = x.angular_velocity() + torque * dt;
    let v = x.velocity() + (total_force / params.mass + gravity) * dt;
    Ok(TrunkState::new(theta, r, omega, v))
}

/// The same step evaluated through the full `(I + AΔT)x + BΔT f + gΔT`
/// matrix form; kept as the algebraic cross-check of [`dyn_step`].
pub fn dyn_step_matrix<T: Real>(
    x: &TrunkState<T>,
    forces: &GroundReactionForces<T>,
    feet: &FootPositionsBody<T>,
    params: &RobotPhysicalParams<T>,
    dt: T,
) -> Result<TrunkState<T>, CoreError> {
    let rotation = x.rotation();
    let a = build_a(&rotation);
    let b = build_b(params, &rotation, feet)?;
    let transition = SMatrix::<T, STATE_DIM, STATE_DIM>::identity() + a * dt;
    let next = transition * x.vector() + b * dt * forces.vector() + gravity_vector::<T>() * dt;
    Ok(TrunkState::from_vector(next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    fn params() -> RobotPhysicalParams<f64> {
        RobotPhysicalParams::new(10.0, Matrix3::from_diagonal(&Vector3::new(0.1, 0.1, 0.1)))
            .unwrap()
    }

    fn random_state(rng: &mut SmallRng) -> TrunkState<f64> {
        TrunkState::new(
            Vector3::from_fn(|_, _| rng.random_range(-0.5..0.5)),
            Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        )
    }

    fn random_feet(rng: &mut SmallRng) -> FootPositionsBody<f64> {
        FootPositionsBody::new(std::array::from_fn(|_| {
            Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3))
        }))
    }

    fn random_forces(rng: &mut SmallRng) -> GroundReactionForces<f64> {
        GroundReactionForces::from_feet(std::array::from_fn(|_| {
            Vector3::from_fn(|_, _| rng.random_range(-30.0..30.0))
        }))
    }

    #[test]
    fn a_identity_rotation_layout() {
        let a = build_a(&Rotation::<f64>::identity());
        for i in 0..12 {
            for j in 0..12 {
                let expected = if (i < 3 && j == i + 6) || ((3..6).contains(&i) && j == i + 6) {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(a[(i, j)], expected, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn a_is_nilpotent_for_any_rotation() {
        let mut rng = SmallRng::seed_from_u64(3);
        for _ in 0..100 {
            let theta = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let a = build_a(&Rotation::from_euler(theta));
            let sq = a * a;
            assert!(sq.iter().all(|&c| c == 0.0), "A² must vanish exactly");
        }
    }

    #[test]
    fn a_pure_yaw_block() {
        let yaw = std::f64::consts::FRAC_PI_2;
        let a = build_a(&Rotation::from_euler(Vector3::new(0.0, 0.0, yaw)));
        let expected = crate::state::rot_z(yaw).transpose();
        assert_relative_eq!(a.fixed_view::<3, 3>(THETA, OMEGA).clone_owned(), expected);
    }

    #[test]
    fn b_zero_feet() {
        let b = build_b(
            &params(),
            &Rotation::identity(),
            &FootPositionsBody::new([Vector3::zeros(); 4]),
        )
        .unwrap();
        for i in 0..4 {
            let omega_block = b.fixed_view::<3, 3>(OMEGA, 3 * i).clone_owned();
            assert_eq!(omega_block, Matrix3::zeros());
            let vel_block = b.fixed_view::<3, 3>(VEL, 3 * i).clone_owned();
            assert_relative_eq!(vel_block, Matrix3::identity() / 10.0);
        }
    }

    #[test]
    fn b_single_foot_against_direct_inverse() {
        // Oracle: invert diag(0.1) by hand -> 10·I, so the ω block is 10·skew(p).
        let p = Vector3::new(0.2, 0.0, -0.3);
        let mut feet = FootPositionsBody::new([Vector3::zeros(); 4]);
        feet.feet[0] = p;
        let b = build_b(&params(), &Rotation::identity(), &feet).unwrap();
        let block = b.fixed_view::<3, 3>(OMEGA, 0).clone_owned();
        assert_relative_eq!(block, skew(&p) * 10.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_inertia_unchanged_by_yaw() {
        let p = params();
        let spun = Rotation::from_euler(Vector3::new(0.0, 0.0, 1.2));
        assert_relative_eq!(
            p.world_inertia(&spun),
            p.inertia_body,
            epsilon = 1e-12
        );
    }

    #[test]
    fn singular_inertia_is_reported() {
        let bad = RobotPhysicalParams {
            mass: 10.0,
            inertia_body: Matrix3::zeros(),
        };
        let err = bad.world_inertia_inv(&Rotation::identity()).unwrap_err();
        assert!(matches!(err, CoreError::SingularInertia { .. }));
    }

    #[test]
    fn free_fall_single_step() {
        let next = dyn_step(
            &TrunkState::zero(),
            &GroundReactionForces::zero(),
            &FootPositionsBody::new([Vector3::new(0.1, 0.1, -0.3); 4]),
            &params(),
            0.005,
        )
        .unwrap();
        let mut expected = TrunkState::zero().into_vector();
        expected[VEL + 2] = -0.04905;
        assert_relative_eq!(next.into_vector(), expected, epsilon = 1e-15);
    }

    #[test]
    fn hover_is_a_fixed_point() {
        // Oracle: force balance. Σf/m + g = 0 and symmetric feet give zero torque.
        let p = params();
        let fz = p.mass * 9.81 / 4.0;
        let feet = FootPositionsBody::new([
            Vector3::new(0.2, 0.15, -0.3),
            Vector3::new(0.2, -0.15, -0.3),
            Vector3::new(-0.2, 0.15, -0.3),
            Vector3::new(-0.2, -0.15, -0.3),
        ]);
        let forces = GroundReactionForces::from_feet([Vector3::new(0.0, 0.0, fz); 4]);
        let rest = TrunkState::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let mut x = rest;
        for _ in 0..1000 {
            x = dyn_step(&x, &forces, &feet, &p, 0.005).unwrap();
        }
        assert!((x.into_vector() - rest.into_vector()).norm() < 1e-12);
    }

    #[test]
    fn block_form_matches_matrix_form() {
        let mut rng = SmallRng::seed_from_u64(21);
        let p = params();
        for _ in 0..1000 {
            let x = random_state(&mut rng);
            let feet = random_feet(&mut rng);
            let f = random_forces(&mut rng);
            let a = dyn_step(&x, &f, &feet, &p, 0.005).unwrap();
            let b = dyn_step_matrix(&x, &f, &feet, &p, 0.005).unwrap();
            assert!((a.into_vector() - b.into_vector()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_force_changes_only_velocity_blocks() {
        let mut rng = SmallRng::seed_from_u64(5);
        let p = params();
        for _ in 0..100 {
            let x = random_state(&mut rng);
            let feet = random_feet(&mut rng);
            let next = dyn_step(&x, &GroundReactionForces::zero(), &feet, &p, 0.01).unwrap();
            assert_eq!(next.angular_velocity(), x.angular_velocity());
            let dv = next.velocity() - x.velocity();
            assert_relative_eq!(dv, Vector3::new(0.0, 0.0, -9.81 * 0.01), epsilon = 1e-15);
        }
    }

    #[test]
    fn step_is_linear_in_state_and_force() {
        // Linearity holds for a fixed rotation supplying A and B.
        let mut rng = SmallRng::seed_from_u64(9);
        let p = params();
        let dt = 0.005;
        for _ in 0..200 {
            let rotation =
                Rotation::from_euler(Vector3::from_fn(|_, _| rng.random_range(-0.4..0.4)));
            let feet = random_feet(&mut rng);
            let x1 = random_state(&mut rng);
            let x2 = random_state(&mut rng);
            let f1 = random_forces(&mut rng);
            let f2 = random_forces(&mut rng);
            let (alpha, beta) = (0.3, 1.7);

            let combined = TrunkState::from_vector(x1.vector() * alpha + x2.vector() * beta);
            let f_combined =
                GroundReactionForces::from_vector(f1.vector() * alpha + f2.vector() * beta);
            let lhs =
                dyn_step_with_rotation(&combined, &f_combined, &feet, &p, &rotation, dt).unwrap();

            let y1 = dyn_step_with_rotation(&x1, &f1, &feet, &p, &rotation, dt).unwrap();
            let y2 = dyn_step_with_rotation(&x2, &f2, &feet, &p, &rotation, dt).unwrap();
            let rhs = y1.into_vector() * alpha + y2.into_vector() * beta
                - gravity_vector::<f64>() * dt * (alpha + beta - 1.0);
            assert!((lhs.into_vector() - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn exponential_identity_against_taylor_series() {
        // Oracle: 20-term Taylor series of e^{A dt}.
        let mut rng = SmallRng::seed_from_u64(13);
        for _ in 0..1000 {
            let theta = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let a = build_a(&Rotation::from_euler(theta)) * 0.005;
            let mut expm = SMatrix::<f64, 12, 12>::identity();
            let mut term = SMatrix::<f64, 12, 12>::identity();
            for k in 1..=20 {
                term = term * a / k as f64;
                expm += term;
            }
            let closed = SMatrix::<f64, 12, 12>::identity() + a;
            assert!((expm - closed).norm() < 1e-12);
        }
    }
}
