//! Model-based Kalman filter over the trunk state.
//!
//! Prediction propagates the mean through the rigid-body step and the
//! covariance through `F = e^{AΔT} = I + AΔT` (exact because `A² = 0`).
//! The update fuses the 10-row measurement
//!
//! ```text
//! z = [θ_imu (3), r_z_odom (1), ω_imu (3), v_odom (3)]
//! ```
//!
//! selecting every state except the horizontal position `r_x, r_y`. Rows can
//! be masked (flight leaves height/velocity unobserved); masked rows are
//! removed from `H`, `z`, and `R` rather than zero-padded, and the covariance
//! update uses the Joseph form.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};

use crate::error::CoreError;
use crate::leg::{
    foot_positions, foot_velocity, trunk_height_odom, trunk_velocity_odom, LegGeometry,
};
use crate::rigid_body::{build_a, dyn_step, FootPositionsBody, GroundReactionForces,
    RobotPhysicalParams};
use crate::scalar::Real;
use crate::sensor::{ImuSample, SensorFrame};
use crate::state::{Rotation, TrunkState, STATE_DIM};

/// Rows of the measurement vector.
pub const MEAS_DIM: usize = 10;

/// State index observed by each measurement row.
pub const MEAS_STATE_INDEX: [usize; MEAS_DIM] = [0, 1, 2, 5, 6, 7, 8, 9, 10, 11];

/// Measurement rows that require at least one stance foot.
pub const ODOMETRY_ROWS: [usize; 4] = [3, 7, 8, 9];

/// Filter mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanBelief<T: Real> {
    pub state: TrunkState<T>,
    pub covariance: SMatrix<T, STATE_DIM, STATE_DIM>,
}

impl<T: Real> KalmanBelief<T> {
    /// Belief with isotropic covariance `p0 · I`.
    pub fn new(state: TrunkState<T>, p0: T) -> Self {
        Self {
            state,
            covariance: SMatrix::identity() * p0,
        }
    }

    /// Symmetry defect and most-negative eigenvalue, for invariant checks.
    pub fn covariance_health(&self) -> (T, T) {
        let asym = (self.covariance - self.covariance.transpose()).abs().max();
        let min_eig = self.covariance.symmetric_eigenvalues().min();
        (asym, min_eig)
    }
}

/// Process and measurement covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig<T: Real> {
    pub process: SMatrix<T, STATE_DIM, STATE_DIM>,
    pub measurement: SMatrix<T, MEAS_DIM, MEAS_DIM>,
}

impl<T: Real> NoiseConfig<T> {
    /// Diagonal covariances from per-block variances.
    ///
    /// `q = [θ, r, ω, v]` block variances for the process;
    /// `r = [θ, r_z, ω, v]` for the measurement.
    pub fn diagonal(q: [T; 4], r: [T; 4]) -> Self {
        let mut process = SMatrix::zeros();
        for i in 0..STATE_DIM {
            process[(i, i)] = q[i / 3];
        }
        let mut measurement = SMatrix::zeros();
        let groups = [0, 0, 0, 1, 2, 2, 2, 3, 3, 3];
        for i in 0..MEAS_DIM {
            measurement[(i, i)] = r[groups[i]];
        }
        Self {
            process,
            measurement,
        }
    }
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        Self::diagonal(
            [T::of(1e-4), T::of(1e-4), T::of(1e-3), T::of(1e-2)],
            [T::of(1e-4), T::of(1e-4), T::of(1e-3), T::of(1e-2)],
        )
    }
}

/// Measurement vector with a per-row validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement<T: Real> {
    pub z: SVector<T, MEAS_DIM>,
    pub valid: [bool; MEAS_DIM],
}

impl<T: Real> Measurement<T> {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Assemble the measurement in its documented row order; the odometry rows
/// are invalid when no odometry could be computed (flight phase).
pub fn assemble_measurement<T: Real>(
    imu: &ImuSample<T>,
    height_odom: Option<T>,
    velocity_odom: Option<Vector3<T>>,
) -> Measurement<T> {
    let mut z = SVector::<T, MEAS_DIM>::zeros();
    let mut valid = [true; MEAS_DIM];
    z.fixed_rows_mut::<3>(0).copy_from(&imu.theta);
    z.fixed_rows_mut::<3>(4).copy_from(&imu.omega);
    match height_odom {
        Some(h) => z[3] = h,
        None => valid[3] = false,
    }
    match velocity_odom {
        Some(v) => z.fixed_rows_mut::<3>(7).copy_from(&v),
        None => {
            valid[7] = false;
            valid[8] = false;
            valid[9] = false;
        }
    }
    Measurement { z, valid }
}

/// Covariance/mean propagation (one prediction).
pub fn predict<T: Real>(
    belief: &mut KalmanBelief<T>,
    forces: &GroundReactionForces<T>,
    feet: &FootPositionsBody<T>,
    params: &RobotPhysicalParams<T>,
    dt: T,
    process: &SMatrix<T, STATE_DIM, STATE_DIM>,
) -> Result<(), CoreError> {
    let rotation = belief.state.rotation();
    let transition = SMatrix::<T, STATE_DIM, STATE_DIM>::identity() + build_a(&rotation) * dt;
    belief.state = dyn_step(&belief.state, forces, feet, params, dt)?;
    belief.covariance = transition * belief.covariance * transition.transpose() + process;
    Ok(())
}

/// Measurement update on the unmasked rows (Joseph-form covariance).
pub fn update<T: Real>(
    belief: &mut KalmanBelief<T>,
    measurement: &Measurement<T>,
    meas_cov: &SMatrix<T, MEAS_DIM, MEAS_DIM>,
) -> Result<(), CoreError> {
    let rows: Vec<usize> = (0..MEAS_DIM).filter(|&i| measurement.valid[i]).collect();
    if rows.is_empty() {
        return Ok(());
    }
    let m = rows.len();

    let mut h = DMatrix::<T>::zeros(m, STATE_DIM);
    let mut z = DVector::<T>::zeros(m);
    let mut r_sub = DMatrix::<T>::zeros(m, m);
    for (a, &row) in rows.iter().enumerate() {
        h[(a, MEAS_STATE_INDEX[row])] = T::one();
        z[a] = measurement.z[row];
        for (b, &col) in rows.iter().enumerate() {
            r_sub[(a, b)] = meas_cov[(row, col)];
        }
    }

    let p = DMatrix::<T>::from_fn(STATE_DIM, STATE_DIM, |i, j| belief.covariance[(i, j)]);
    let innovation_cov = &h * &p * h.transpose() + &r_sub;

    let eigen = innovation_cov.clone().symmetric_eigenvalues();
    let max_eig = eigen.max();
    let min_eig = eigen.min();
    if min_eig <= T::zero() || max_eig / min_eig > T::of(1e12) {
        return Err(CoreError::InnovationSingular {
            condition: (max_eig / min_eig).to_f64_lossy(),
        });
    }
    let s_inv = innovation_cov
        .try_inverse()
        .ok_or(CoreError::InnovationSingular { condition: f64::INFINITY })?;

    let gain = &p * h.transpose() * s_inv;
    let innovation = z - &h * DVector::from_row_slice(belief.state.vector().as_slice());
    let correction = &gain * innovation;

    let mut x = *belief.state.vector();
    for i in 0..STATE_DIM {
        x[i] += correction[i];
    }
    belief.state = TrunkState::from_vector(x);

    let identity = DMatrix::<T>::identity(STATE_DIM, STATE_DIM);
    let closed = &identity - &gain * &h;
    let joseph = &closed * &p * closed.transpose() + &gain * r_sub * gain.transpose();
    for i in 0..STATE_DIM {
        for j in 0..STATE_DIM {
            belief.covariance[(i, j)] = joseph[(i, j)];
        }
    }
    Ok(())
}

/// The assembled filter: geometry, physics, noise, and timing in one place.
#[derive(Debug, Clone)]
pub struct KalmanFilter<T: Real> {
    pub params: RobotPhysicalParams<T>,
    pub geometry: LegGeometry<T>,
    pub noise: NoiseConfig<T>,
    pub dt: T,
    /// Use the literal body-frame z in the height odometry (see leg module).
    pub raw_body_z: bool,
}

impl<T: Real> KalmanFilter<T> {
    pub fn new(
        params: RobotPhysicalParams<T>,
        geometry: LegGeometry<T>,
        noise: NoiseConfig<T>,
        dt: T,
    ) -> Self {
        Self {
            params,
            geometry,
            noise,
            dt,
            raw_body_z: false,
        }
    }

    /// One full filter step: kinematics → odometry → predict → update.
    ///
    /// Exactly one prediction and at most one update run per call; odometry
    /// rows drop out when the reference says no foot is in contact.
    pub fn step(
        &self,
        belief: &mut KalmanBelief<T>,
        frame: &SensorFrame<T>,
    ) -> Result<(), CoreError> {
        let feet = foot_positions(&frame.joints, &self.geometry);
        let foot_rates = foot_velocity(&frame.joints, &self.geometry);
        let imu_rotation = Rotation::from_euler(frame.imu.theta);

        let (height, velocity) = if frame.contact.count() > 0 {
            let h = trunk_height_odom(&feet, &imu_rotation, &frame.contact, self.raw_body_z)?;
            let v = trunk_velocity_odom(
                &feet,
                &foot_rates,
                &frame.imu.omega,
                &imu_rotation,
                &frame.contact,
            )?;
            (Some(h), Some(v))
        } else {
            (None, None)
        };
        let measurement = assemble_measurement(&frame.imu, height, velocity);

        let forces = frame.forces.masked(&frame.contact);
        predict(
            belief,
            &forces,
            &feet,
            &self.params,
            self.dt,
            &self.noise.process,
        )?;
        update(belief, &measurement, &self.noise.measurement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;
    use rand::rngs::SmallRng;
    use rand::{Rng, SeedableRng};

    fn params() -> RobotPhysicalParams<f64> {
        RobotPhysicalParams::new(12.0, Matrix3::from_diagonal(&Vector3::new(0.05, 0.1, 0.12)))
            .unwrap()
    }

    fn stance_feet() -> FootPositionsBody<f64> {
        FootPositionsBody::new([
            Vector3::new(0.2, 0.13, -0.3),
            Vector3::new(0.2, -0.13, -0.3),
            Vector3::new(-0.2, 0.13, -0.3),
            Vector3::new(-0.2, -0.13, -0.3),
        ])
    }

    #[test]
    fn measurement_row_order_with_sentinels() {
        let imu = ImuSample {
            theta: Vector3::new(1.0, 2.0, 3.0),
            omega: Vector3::new(5.0, 6.0, 7.0),
            accel: Vector3::zeros(),
            ang_accel: Vector3::zeros(),
        };
        let m = assemble_measurement(&imu, Some(4.0), Some(Vector3::new(8.0, 9.0, 10.0)));
        for i in 0..10 {
            assert_eq!(m.z[i], (i + 1) as f64, "row {i}");
            assert!(m.valid[i]);
        }
    }

    #[test]
    fn flight_masks_odometry_rows() {
        let m = assemble_measurement(&ImuSample::<f64>::zero(), None, None);
        assert_eq!(m.valid, [true, true, true, false, true, true, true, false, false, false]);
        assert_eq!(m.valid_count(), 6);
    }

    #[test]
    fn full_stance_keeps_all_rows() {
        let m =
            assemble_measurement(&ImuSample::<f64>::zero(), Some(0.3), Some(Vector3::zeros()));
        assert_eq!(m.valid_count(), 10);
    }

    #[test]
    fn predict_zero_covariance_gains_process_noise() {
        let mut belief = KalmanBelief::new(TrunkState::zero(), 0.0);
        let q = SMatrix::<f64, 12, 12>::identity() * 0.37;
        predict(
            &mut belief,
            &GroundReactionForces::zero(),
            &stance_feet(),
            &params(),
            0.005,
            &q,
        )
        .unwrap();
        assert_relative_eq!(belief.covariance, q, epsilon = 1e-15);
    }

    #[test]
    fn predict_matches_dense_multiplication() {
        // Oracle: form F by hand and multiply densely.
        let mut rng = SmallRng::seed_from_u64(2);
        let p0 = {
            let raw = SMatrix::<f64, 12, 12>::from_fn(|_, _| rng.random_range(-1.0..1.0));
            raw * raw.transpose() + SMatrix::identity() * 0.1
        };
        let mut belief = KalmanBelief {
            state: TrunkState::zero(),
            covariance: p0,
        };
        let q = SMatrix::<f64, 12, 12>::identity() * 1e-4;
        predict(
            &mut belief,
            &GroundReactionForces::zero(),
            &stance_feet(),
            &params(),
            0.005,
            &q,
        )
        .unwrap();

        let f = SMatrix::<f64, 12, 12>::identity() + build_a(&Rotation::identity()) * 0.005;
        let expected = f * p0 * f.transpose() + q;
        assert_relative_eq!(belief.covariance, expected, epsilon = 1e-12);
    }

    #[test]
    fn trace_never_decreases_with_identity_transition() {
        // dt → 0 limit: F = I, so trace grows exactly by trace(Q).
        let mut belief = KalmanBelief::new(TrunkState::zero(), 0.2);
        let before = belief.covariance.trace();
        let q = SMatrix::<f64, 12, 12>::identity() * 1e-3;
        predict(
            &mut belief,
            &GroundReactionForces::zero(),
            &stance_feet(),
            &params(),
            0.0,
            &q,
        )
        .unwrap();
        assert_relative_eq!(belief.covariance.trace(), before + 12.0 * 1e-3, epsilon = 1e-12);
    }

    fn full_measurement(value: f64) -> Measurement<f64> {
        Measurement {
            z: SVector::repeat(value),
            valid: [true; 10],
        }
    }

    #[test]
    fn uninformative_measurement_keeps_prior() {
        let mut belief = KalmanBelief::new(TrunkState::zero(), 1.0);
        let prior = belief.clone();
        let r = SMatrix::<f64, 10, 10>::identity() * 1e12;
        update(&mut belief, &full_measurement(5.0), &r).unwrap();
        assert!((belief.state.vector() - prior.state.vector()).norm() < 1e-6);
        assert!((belief.covariance - prior.covariance).norm() < 1e-5);
    }

    #[test]
    fn uninformative_prior_adopts_measurement() {
        let mut belief = KalmanBelief::new(TrunkState::zero(), 1e6);
        let r = SMatrix::<f64, 10, 10>::identity() * 1e-6;
        update(&mut belief, &full_measurement(2.5), &r).unwrap();
        for (row, &idx) in MEAS_STATE_INDEX.iter().enumerate() {
            let _ = row;
            assert_relative_eq!(belief.state.vector()[idx], 2.5, epsilon = 1e-3);
        }
        // Unobserved horizontal position keeps its prior mean.
        assert_eq!(belief.state.vector()[3], 0.0);
        assert_eq!(belief.state.vector()[4], 0.0);
    }

    #[test]
    fn scalar_subsystem_matches_riccati_fixed_point() {
        // Mask all but the height row; the filter reduces to a scalar system
        // with F = 1. Oracle: closed-form gain and the fixed point of the
        // scalar Riccati recursion p <- (1-k)(p+q).
        let q_scalar = 1e-3;
        let r_scalar = 1e-2;
        let mut belief = KalmanBelief::new(TrunkState::zero(), 0.04);
        let mut q = SMatrix::<f64, 12, 12>::zeros();
        q[(5, 5)] = q_scalar;
        let r = SMatrix::<f64, 10, 10>::identity() * r_scalar;
        let measurement = Measurement {
            z: SVector::repeat(1.0),
            valid: {
                let mut v = [false; 10];
                v[3] = true;
                v
            },
        };

        // One hand-checked update from p = 0.04.
        let p_prior: f64 = 0.04 + q_scalar;
        let k = p_prior / (p_prior + r_scalar);
        predict(
            &mut belief,
            &GroundReactionForces::zero(),
            &stance_feet(),
            &params(),
            0.0,
            &q,
        )
        .unwrap();
        update(&mut belief, &measurement, &r).unwrap();
        assert_relative_eq!(belief.state.vector()[5], k * 1.0, epsilon = 1e-12);
        assert_relative_eq!(belief.covariance[(5, 5)], (1.0 - k) * p_prior, epsilon = 1e-12);

        // Iterate to steady state and compare against fixed-point iteration.
        for _ in 0..1000 {
            predict(
                &mut belief,
                &GroundReactionForces::zero(),
                &stance_feet(),
                &params(),
                0.0,
                &q,
            )
            .unwrap();
            update(&mut belief, &measurement, &r).unwrap();
        }
        let mut p_star: f64 = 1.0;
        for _ in 0..10_000 {
            let prior = p_star + q_scalar;
            p_star = (1.0 - prior / (prior + r_scalar)) * prior;
        }
        let k_star = (p_star + q_scalar) / (p_star + q_scalar + r_scalar);
        let p_prior_ss = belief.covariance[(5, 5)] + q_scalar;
        let k_ss = p_prior_ss / (p_prior_ss + r_scalar);
        assert_relative_eq!(belief.covariance[(5, 5)], p_star, epsilon = 1e-9);
        assert_relative_eq!(k_ss, k_star, epsilon = 1e-9);
    }

    #[test]
    fn singular_innovation_is_detected() {
        let mut belief = KalmanBelief::new(TrunkState::zero(), 1.0);
        let r = SMatrix::<f64, 10, 10>::zeros();
        // Zero R with a rank-deficient prior would still be fine; force
        // singularity with a zero covariance and zero R.
        belief.covariance = SMatrix::zeros();
        let err = update(&mut belief, &full_measurement(1.0), &r).unwrap_err();
        assert!(matches!(err, CoreError::InnovationSingular { .. }));
    }

    #[test]
    fn covariance_stays_symmetric_psd_over_random_steps() {
        let mut rng = SmallRng::seed_from_u64(77);
        let p = params();
        let mut belief = KalmanBelief::new(TrunkState::zero(), 1e-2);
        let noise = NoiseConfig::<f64>::default();
        let feet = stance_feet();
        for step in 0..100_000 {
            let forces = GroundReactionForces::from_feet(std::array::from_fn(|_| {
                Vector3::from_fn(|_, _| rng.random_range(-20.0..20.0))
            }));
            predict(&mut belief, &forces, &feet, &p, 0.005, &noise.process).unwrap();
            // Keep the mean bounded; this test only cares about P.
            belief.state = TrunkState::zero();
            let mut valid = [false; 10];
            for (i, v) in valid.iter_mut().enumerate() {
                *v = rng.random_bool(0.8) || i < 3 || (4..7).contains(&i);
            }
            let measurement = Measurement {
                z: SVector::from_fn(|_, _| rng.random_range(-0.5..0.5)),
                valid,
            };
            update(&mut belief, &measurement, &noise.measurement).unwrap();
            if step % 10_000 == 0 {
                let (asym, min_eig) = belief.covariance_health();
                assert!(asym < 1e-9, "asymmetry {asym} at step {step}");
                assert!(min_eig > -1e-9, "min eigenvalue {min_eig} at step {step}");
            }
        }
        let (asym, min_eig) = belief.covariance_health();
        assert!(asym < 1e-9);
        assert!(min_eig > -1e-9);
    }
}
