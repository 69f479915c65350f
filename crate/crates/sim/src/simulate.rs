//! Closed-loop trajectory generation.
//!
//! Per control tick: reference → stance-force allocation → rigid-body ground
//! truth, with foot kinematics driven by the trot schedule. Slip and
//! compliance move the *actual* feet (the joints report it faithfully), which
//! is exactly what breaks the pinned-foot odometry assumptions downstream.
//! Measurement noise is added on top; ground truth always propagates through
//! the rigid-body step with the recorded forces.

use nalgebra::Vector3;
use optistate_core::{
    allocator::allocate,
    leg::{foot_positions, inverse_kinematics, leg_jacobian},
    rigid_body::dyn_step,
    state::{rot_z, FrameConvention},
    ImuSample, JointSample, SensorFrame, TrunkState,
};
use optistate_core::sensor::DepthFrame;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use std::sync::Arc;

use crate::config::{SimConfig, TerrainConfig};
use crate::dataset::Dataset;
use crate::depth::render_depth;
use crate::error::SimError;
use crate::gait::{contact_at, next_touchdown, stance_duration};
use crate::reference::ReferenceGenerator;
use crate::terrain::Terrain;
use rand::SeedableRng;

/// Diagnostics that are not part of the serialized dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimStats {
    /// Frames with at least one stance foot.
    pub stance_frames: usize,
    /// Frames where a slip event was injected.
    pub slip_frames: usize,
    /// Worst commanded-velocity tracking error seen after the ramp, m/s.
    pub max_velocity_error: f64,
}

#[derive(Debug, Clone, Copy)]
enum FootMode {
    Stance {
        anchor: Vector3<f64>,
        touchdown_z: f64,
    },
    Swing {
        start: Vector3<f64>,
        target: Vector3<f64>,
        t0: f64,
        t1: f64,
    },
}

fn smoothstep(s: f64) -> f64 {
    s * s * (3.0 - 2.0 * s)
}

fn smoothstep_rate(s: f64) -> f64 {
    6.0 * s * (1.0 - s)
}

/// Swing-foot world position and velocity at phase `s` of the arc.
fn swing_point(
    start: &Vector3<f64>,
    target: &Vector3<f64>,
    apex: f64,
    s: f64,
    duration: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let s = s.clamp(0.0, 1.0);
    let blend = smoothstep(s);
    let rate = smoothstep_rate(s) / duration;
    let pos = start + (target - start) * blend
        + Vector3::new(0.0, 0.0, apex * (std::f64::consts::PI * s).sin());
    let vel = (target - start) * rate
        + Vector3::new(
            0.0,
            0.0,
            apex * std::f64::consts::PI * (std::f64::consts::PI * s).cos() / duration,
        );
    (pos, vel)
}

struct NoiseSampler {
    rng: ChaCha12Rng,
    normal: Normal<f64>,
}

impl NoiseSampler {
    fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, 1.0).unwrap(),
        }
    }

    fn scalar(&mut self, std: f64) -> f64 {
        // Always consume one draw so noise levels don't shift the stream.
        let x = self.normal.sample(&mut self.rng);
        std * x
    }

    fn vec3(&mut self, std: f64) -> Vector3<f64> {
        Vector3::new(self.scalar(std), self.scalar(std), self.scalar(std))
    }
}

/// Simulate one trajectory. See [`simulate_with_stats`] for diagnostics.
pub fn simulate(config: &SimConfig) -> Result<Dataset, SimError> {
    simulate_with_stats(config).map(|(dataset, _)| dataset)
}

pub fn simulate_with_stats(config: &SimConfig) -> Result<(Dataset, SimStats), SimError> {
    config.validate()?;
    let dt = config.dt;
    let physical = config.robot.physical()?;
    let geometry = config.robot.geometry()?;
    let alloc_params = config.alloc.params();
    let terrain = Terrain::new(config.terrain, config.seed ^ 0x7455_7255);

    let mut reference = ReferenceGenerator::new(
        config.command,
        &terrain,
        config.robot.stance_height,
        ChaCha12Rng::seed_from_u64(config.seed ^ 0x5245_4631),
    );
    let mut noise = NoiseSampler::new(config.seed ^ 0x4e4f_4953);
    let mut slip_rng = ChaCha12Rng::seed_from_u64(config.seed ^ 0x534c_4950);

    // Start on the reference: standing level at nominal height.
    let mut truth = TrunkState::new(
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(0.0, 0.0, terrain.height(0.0, 0.0) + config.robot.stance_height),
        Vector3::zeros(),
        Vector3::zeros(),
    );

    // Nominal foot placement under the hips.
    let nominal_offset = |leg: usize| {
        geometry.hip_offsets[leg] + Vector3::new(0.0, geometry.abduction_offset[leg], 0.0)
    };
    let place_on_ground = |xy: Vector3<f64>| -> Vector3<f64> {
        Vector3::new(xy.x, xy.y, terrain.height(xy.x, xy.y))
    };

    let n_frames = config.frame_count();
    let swing_time = (1.0 - config.gait.duty) * config.gait.period;
    let mut feet_modes: Vec<FootMode> = (0..4)
        .map(|leg| {
            let world = place_on_ground(truth.position() + truth.rotation().rotate(&nominal_offset(leg)));
            FootMode::Stance {
                anchor: world,
                touchdown_z: world.z,
            }
        })
        .collect();

    // Legs scheduled as swing at t = 0 start mid-air toward their first
    // touchdown.
    let contact0 = contact_at(&config.gait, config.command.profile, 0.0);
    for leg in 0..4 {
        if !contact0.is_stance(leg) {
            let t1 = next_touchdown(&config.gait, leg, 0.0);
            if let FootMode::Stance { anchor, .. } = feet_modes[leg] {
                feet_modes[leg] = FootMode::Swing {
                    start: anchor,
                    target: anchor,
                    t0: t1 - swing_time,
                    t1,
                };
            }
        }
    }

    let mut frames: Vec<SensorFrame> = Vec::with_capacity(n_frames);
    let mut stats = SimStats::default();
    let mut prev_v = truth.velocity();
    let mut prev_omega = truth.angular_velocity();
    let mut held_depth: Option<DepthFrame> = None;
    let mut images_rendered: u64 = 0;
    let gravity_up = Vector3::new(0.0, 0.0, FrameConvention::gravity::<f64>());

    for k in 0..n_frames {
        let t = k as f64 * dt;
        let x_ref = reference.step(dt, &terrain);
        let contact = contact_at(&config.gait, config.command.profile, t);
        let rotation = truth.rotation();

        // Foot mode transitions driven by the schedule.
        for leg in 0..4 {
            match (contact.is_stance(leg), feet_modes[leg]) {
                (true, FootMode::Swing { target, .. }) => {
                    feet_modes[leg] = FootMode::Stance {
                        anchor: target,
                        touchdown_z: target.z,
                    };
                }
                (false, FootMode::Stance { anchor, .. }) => {
                    let t1 = next_touchdown(&config.gait, leg, t);
                    let v_cmd = reference.commanded_velocity();
                    let yaw = truth.theta().z + x_ref.angular_velocity().z * (t1 - t);
                    let trunk_pred = truth.position() + v_cmd * (t1 - t);
                    let mut target_xy = trunk_pred
                        + rot_z(yaw) * nominal_offset(leg)
                        + v_cmd * (stance_duration(&config.gait) / 2.0);
                    // Keep the step reachable from the predicted hip.
                    let hip_pred = trunk_pred + rot_z(yaw) * geometry.hip_offsets[leg];
                    let mut lateral = target_xy - hip_pred;
                    lateral.z = 0.0;
                    let max_step = 0.45 * geometry.max_reach();
                    if lateral.norm() > max_step {
                        target_xy = hip_pred + lateral * (max_step / lateral.norm());
                    }
                    let target = place_on_ground(target_xy);
                    feet_modes[leg] = FootMode::Swing {
                        start: anchor,
                        target,
                        t0: t,
                        t1,
                    };
                }
                _ => {}
            }
        }

        // Slip event for this frame (slippery terrain only). Feet lose grip
        // against the thrust direction: they slide mostly opposite the
        // commanded travel, with some scatter, so the corrupted odometry
        // carries a systematic bias rather than white noise.
        let mut slip: Option<(usize, Vector3<f64>)> = None;
        if let TerrainConfig::Slippery {
            slip_rate,
            slip_magnitude,
        } = config.terrain
        {
            let event = slip_rng.random_bool(slip_rate.clamp(0.0, 1.0));
            let stance_legs: Vec<usize> = (0..4).filter(|&l| contact.is_stance(l)).collect();
            if event && !stance_legs.is_empty() && t > config.command.ramp {
                let leg = stance_legs[slip_rng.random_range(0..stance_legs.len())];
                let phi = slip_rng.random_range(0.0..std::f64::consts::TAU);
                let scatter = Vector3::new(phi.cos(), phi.sin(), 0.0);
                let v_cmd = reference.commanded_velocity();
                let planar = Vector3::new(v_cmd.x, v_cmd.y, 0.0);
                let dir = if planar.norm() > 0.05 {
                    (-planar / planar.norm() + scatter * 0.4).normalize()
                } else {
                    scatter
                };
                slip = Some((leg, dir * slip_magnitude));
            }
        }

        // World foot positions/velocities for this frame.
        let mut foot_world = [Vector3::zeros(); 4];
        let mut foot_world_vel = [Vector3::zeros(); 4];
        for leg in 0..4 {
            match feet_modes[leg] {
                FootMode::Stance {
                    anchor,
                    touchdown_z,
                } => {
                    foot_world[leg] = anchor;
                    let mut vel = Vector3::zeros();
                    if let Some((slip_leg, slip_vel)) = slip {
                        if slip_leg == leg {
                            vel += slip_vel;
                        }
                    }
                    if let TerrainConfig::Rough {
                        sink_rate,
                        max_sink,
                        ..
                    } = config.terrain
                    {
                        if touchdown_z - anchor.z < max_sink {
                            vel.z -= sink_rate;
                        }
                    }
                    foot_world_vel[leg] = vel;
                }
                FootMode::Swing {
                    start,
                    target,
                    t0,
                    t1,
                } => {
                    let duration = (t1 - t0).max(dt);
                    let s = (t - t0) / duration;
                    let (pos, vel) =
                        swing_point(&start, &target, config.gait.swing_height, s, duration);
                    foot_world[leg] = pos;
                    foot_world_vel[leg] = vel;
                }
            }
        }

        // Workspace guard: a leg cannot physically reach beyond its links or
        // fold inside the abduction cylinder, so violating feet get dragged
        // back into the reachable set. The drag is real foot motion
        // (reported by the encoders and felt by the odometry, exactly like
        // slip); it never fires on nominal gaits.
        for leg in 0..4 {
            let hip_world = truth.position() + rotation.rotate(&geometry.hip_offsets[leg]);
            let mut q = rotation.inverse_rotate(&(foot_world[leg] - hip_world));
            let mut adjusted = false;
            let min_lat = 1.15 * geometry.abduction_offset[leg].abs();
            if (q.y * q.y + q.z * q.z).sqrt() < min_lat {
                q.z = -(min_lat * min_lat - q.y * q.y).max(0.0).sqrt();
                adjusted = true;
            }
            let limit = 0.97 * geometry.max_reach();
            if q.norm() > limit {
                q *= limit / q.norm();
                adjusted = true;
            }
            if adjusted {
                let corrected = hip_world + rotation.rotate(&q);
                foot_world_vel[leg] += (corrected - foot_world[leg]) / dt;
                foot_world[leg] = corrected;
                if let FootMode::Stance { anchor, .. } = &mut feet_modes[leg] {
                    *anchor = corrected;
                }
            }
        }

        // Body-frame kinematics (the controller and the sensors share them).
        let omega_body = rotation.inverse_rotate(&truth.angular_velocity());
        let mut feet_body = [Vector3::zeros(); 4];
        let mut feet_body_vel = [Vector3::zeros(); 4];
        for leg in 0..4 {
            let p_b = rotation.inverse_rotate(&(foot_world[leg] - truth.position()));
            let pdot_b = rotation.inverse_rotate(&(foot_world_vel[leg] - truth.velocity()))
                - omega_body.cross(&p_b);
            feet_body[leg] = p_b;
            feet_body_vel[leg] = pdot_b;
        }
        let feet_body = optistate_core::FootPositionsBody::new(feet_body);

        // Control: stance forces tracking the reference.
        let forces = allocate(
            &truth,
            &x_ref,
            &feet_body,
            &contact,
            &alloc_params,
            &physical,
        )
        .map_err(|source| SimError::Simulation { t, source })?;

        // Joint encoders via inverse kinematics of the true foot positions.
        let mut joints = JointSample::zero();
        for leg in 0..4 {
            let angles = inverse_kinematics(&feet_body.feet[leg], &geometry, leg).map_err(
                |source| SimError::Simulation {
                    t,
                    source: optistate_core::CoreError::InvalidParameter(format!(
                        "leg {leg} at p_b {:?} (trunk theta {:?}, z {:.3}): {source}",
                        feet_body.feet[leg],
                        truth.theta(),
                        truth.position().z
                    )),
                },
            )?;
            let jac = leg_jacobian(&angles, &geometry, leg);
            let rates = jac
                .lu()
                .solve(&feet_body_vel[leg])
                .ok_or(SimError::Simulation {
                    t,
                    source: optistate_core::CoreError::InvalidParameter(
                        "singular leg Jacobian".into(),
                    ),
                })?;
            let noisy_angles = angles + noise.vec3(config.noise.joint_pos);
            let noisy_rates = rates + noise.vec3(config.noise.joint_vel);
            joints
                .theta
                .fixed_rows_mut::<3>(3 * leg)
                .copy_from(&noisy_angles);
            joints
                .theta_dot
                .fixed_rows_mut::<3>(3 * leg)
                .copy_from(&noisy_rates);
        }

        // IMU synthesis from the truth trajectory.
        let accel_world = (truth.velocity() - prev_v) / dt;
        let imu = ImuSample {
            theta: truth.theta() + noise.vec3(config.noise.theta_imu),
            omega: truth.angular_velocity() + noise.vec3(config.noise.omega_imu),
            accel: rotation.inverse_rotate(&(accel_world + gravity_up))
                + noise.vec3(config.noise.accel_imu),
            ang_accel: (truth.angular_velocity() - prev_omega) / dt
                + noise.vec3(config.noise.alpha_imu),
        };

        // Depth camera at its own rate, held between refreshes.
        if config.camera.enabled {
            let due = images_rendered as f64 / config.camera.rate_hz;
            if t + 1e-12 >= due {
                let image = render_depth(&terrain, &truth, &config.camera);
                held_depth = Some(DepthFrame {
                    seq: images_rendered,
                    image: Arc::new(image),
                });
                images_rendered += 1;
            }
        }

        // Mocap surrogate.
        let mocap = TrunkState::new(
            truth.theta() + noise.vec3(config.noise.mocap_angular),
            truth.position() + noise.vec3(config.noise.mocap_linear),
            truth.angular_velocity() + noise.vec3(config.noise.mocap_angular),
            truth.velocity() + noise.vec3(config.noise.mocap_linear),
        );

        frames.push(SensorFrame {
            t,
            joints,
            imu,
            contact,
            forces,
            depth: held_depth.clone(),
            truth: Some(mocap),
        });

        if contact.count() > 0 {
            stats.stance_frames += 1;
        }
        if slip.is_some() {
            stats.slip_frames += 1;
        }
        if t > config.command.ramp + 1.0 {
            let verr = (truth.velocity().fixed_rows::<2>(0)
                - x_ref.velocity().fixed_rows::<2>(0))
            .norm();
            stats.max_velocity_error = stats.max_velocity_error.max(verr);
        }

        // Advance the ground truth and moving anchors.
        prev_v = truth.velocity();
        prev_omega = truth.angular_velocity();
        truth = dyn_step(&truth, &forces, &feet_body, &physical, dt)
            .map_err(|source| SimError::Simulation { t, source })?;
        for leg in 0..4 {
            if let FootMode::Stance { anchor, .. } = &mut feet_modes[leg] {
                *anchor += foot_world_vel[leg] * dt;
            }
        }
        if !truth.is_finite() {
            return Err(SimError::Simulation {
                t,
                source: optistate_core::CoreError::InvalidParameter(
                    "ground truth diverged".into(),
                ),
            });
        }
    }

    let dataset = Dataset {
        dt,
        frames,
        config_kv: config.to_kv(),
    };
    Ok((dataset, stats))
}

/// Accessor used by consistency tests: recompute body-frame foot positions
/// from a frame's (noise-free) joint encoders.
pub fn frame_foot_positions(
    frame: &SensorFrame,
    config: &SimConfig,
) -> Result<optistate_core::FootPositionsBody, SimError> {
    Ok(foot_positions(&frame.joints, &config.robot.geometry()?))
}
