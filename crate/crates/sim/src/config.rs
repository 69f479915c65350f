//! Simulation configuration, round-trippable through `key = value` text.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use optistate_core::{AllocatorParams, LegGeometry, RobotPhysicalParams, Scalar};

use crate::error::SimError;
use crate::kv::{self, KvReader};

/// Trot timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaitConfig {
    /// Full gait cycle, s.
    pub period: f64,
    /// Stance fraction of the cycle per foot, in (0, 1).
    pub duty: f64,
    /// Swing apex height, m.
    pub swing_height: f64,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            period: 0.4,
            duty: 0.5,
            swing_height: 0.05,
        }
    }
}

/// Ground model and measurement-corruption mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TerrainConfig {
    Flat,
    /// Uniform slope along +x, rad.
    Incline { angle: f64 },
    /// Flat ground where stance feet slide: per frame, with probability
    /// `slip_rate`, one random stance foot drags at `slip_magnitude` m/s.
    Slippery { slip_rate: f64, slip_magnitude: f64 },
    /// Seeded value-noise heightfield plus compliant footing: loaded feet
    /// sink at `sink_rate` m/s down to `max_sink` m.
    Rough {
        amplitude: f64,
        sink_rate: f64,
        max_sink: f64,
    },
}

impl TerrainConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            TerrainConfig::Flat => "flat",
            TerrainConfig::Incline { .. } => "incline",
            TerrainConfig::Slippery { .. } => "slippery",
            TerrainConfig::Rough { .. } => "rough",
        }
    }
}

impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig::Flat
    }
}

/// Gaussian standard deviations per sensor channel; zero disables a channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLevels {
    pub theta_imu: f64,
    pub omega_imu: f64,
    pub accel_imu: f64,
    pub alpha_imu: f64,
    pub joint_pos: f64,
    pub joint_vel: f64,
    /// Mocap surrogate noise on position/velocity (m, m/s).
    pub mocap_linear: f64,
    /// Mocap surrogate noise on angles/rates (rad, rad/s).
    pub mocap_angular: f64,
}

impl NoiseLevels {
    pub fn zero() -> Self {
        Self {
            theta_imu: 0.0,
            omega_imu: 0.0,
            accel_imu: 0.0,
            alpha_imu: 0.0,
            joint_pos: 0.0,
            joint_vel: 0.0,
            mocap_linear: 0.0,
            mocap_angular: 0.0,
        }
    }
}

impl Default for NoiseLevels {
    fn default() -> Self {
        Self {
            theta_imu: 1e-3,
            omega_imu: 2e-3,
            accel_imu: 2e-2,
            alpha_imu: 5e-2,
            joint_pos: 1e-3,
            joint_vel: 2e-2,
            mocap_linear: 1e-3,
            mocap_angular: 1e-3,
        }
    }
}

/// Trunk-mounted depth camera, pitched down toward the ground.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraConfig {
    pub enabled: bool,
    /// Refresh rate, Hz; frames between refreshes repeat the last image.
    pub rate_hz: f64,
    pub height: usize,
    pub width: usize,
    pub fov_deg: f64,
    /// Depth normalization range, m.
    pub max_range: f64,
    /// Downward pitch of the mount, deg.
    pub pitch_deg: f64,
    /// Mount offset from the CoM, body frame.
    pub offset: [f64; 3],
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rate_hz: 60.0,
            height: 224,
            width: 224,
            fov_deg: 60.0,
            max_range: 4.0,
            pitch_deg: 45.0,
            offset: [0.25, 0.0, 0.05],
        }
    }
}

/// Physical trunk and leg dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotConfig {
    pub mass: f64,
    pub inertia_diag: [f64; 3],
    /// Hip half-spacings from the CoM, m.
    pub hip_x: f64,
    pub hip_y: f64,
    /// Link lengths, m.
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    /// Nominal trunk height above the feet, m.
    pub stance_height: f64,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            mass: 12.0,
            inertia_diag: [0.05, 0.10, 0.12],
            hip_x: 0.17,
            hip_y: 0.09,
            l1: 0.06,
            l2: 0.20,
            l3: 0.20,
            stance_height: 0.30,
        }
    }
}

impl RobotConfig {
    pub fn physical(&self) -> Result<RobotPhysicalParams, SimError> {
        RobotPhysicalParams::new(
            self.mass,
            Matrix3::from_diagonal(&Vector3::new(
                self.inertia_diag[0],
                self.inertia_diag[1],
                self.inertia_diag[2],
            )),
        )
        .map_err(|e| SimError::Config(format!("robot parameters: {e}")))
    }

    pub fn geometry(&self) -> Result<LegGeometry, SimError> {
        LegGeometry::symmetric(self.hip_x, self.hip_y, self.l1, self.l2, self.l3)
            .map_err(|e| SimError::Config(format!("leg geometry: {e}")))
    }
}

/// What the operator asks the robot to do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandProfile {
    /// All feet planted, zero velocity command.
    Standing,
    /// Constant forward speed, zero yaw rate (slippery/incline protocol).
    StraightLine,
    /// Mean-reverting random velocity and yaw-rate commands.
    RandomWalk,
}

impl CommandProfile {
    pub fn name(&self) -> &'static str {
        match self {
            CommandProfile::Standing => "standing",
            CommandProfile::StraightLine => "straight",
            CommandProfile::RandomWalk => "random_walk",
        }
    }
}

/// Velocity-command generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandConfig {
    pub profile: CommandProfile,
    /// Forward speed for the straight-line profile, m/s.
    pub speed: f64,
    /// Random-walk velocity std and clamp, m/s.
    pub v_std: f64,
    pub v_max: f64,
    /// Random-walk yaw-rate std and clamp, rad/s.
    pub yaw_rate_std: f64,
    pub yaw_rate_max: f64,
    /// Command ramp-in time from standstill, s.
    pub ramp: f64,
}

impl Default for CommandConfig {
    fn default() -> Self {
        Self {
            profile: CommandProfile::RandomWalk,
            speed: 0.3,
            v_std: 0.10,
            v_max: 0.25,
            yaw_rate_std: 0.06,
            yaw_rate_max: 0.15,
            ramp: 0.5,
        }
    }
}

/// Force-allocation knobs exposed to configs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocConfig {
    pub friction: f64,
    pub fz_min: f64,
    pub fz_max: f64,
    pub kp: f64,
    pub kd: f64,
}

impl Default for AllocConfig {
    fn default() -> Self {
        let p = AllocatorParams::default();
        Self {
            friction: p.friction,
            fz_min: p.fz_min,
            fz_max: p.fz_max,
            kp: p.kp,
            kd: p.kd,
        }
    }
}

impl AllocConfig {
    pub fn params(&self) -> AllocatorParams {
        AllocatorParams {
            friction: self.friction,
            fz_min: self.fz_min,
            fz_max: self.fz_max,
            kp: self.kp,
            kd: self.kd,
            ..AllocatorParams::default()
        }
    }
}

/// Complete, seeded description of one simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Control/estimation period, s.
    pub dt: Scalar,
    /// Trajectory length, s.
    pub duration: f64,
    pub seed: u64,
    pub gait: GaitConfig,
    pub terrain: TerrainConfig,
    pub noise: NoiseLevels,
    pub camera: CameraConfig,
    pub robot: RobotConfig,
    pub command: CommandConfig,
    pub alloc: AllocConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.005,
            duration: 60.0,
            seed: 0,
            gait: GaitConfig::default(),
            terrain: TerrainConfig::default(),
            noise: NoiseLevels::default(),
            camera: CameraConfig::default(),
            robot: RobotConfig::default(),
            command: CommandConfig::default(),
            alloc: AllocConfig::default(),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "dt",
    "duration",
    "seed",
    "gait.period",
    "gait.duty",
    "gait.swing_height",
    "terrain.kind",
    "terrain.angle",
    "terrain.slip_rate",
    "terrain.slip_magnitude",
    "terrain.amplitude",
    "terrain.sink_rate",
    "terrain.max_sink",
    "noise.theta_imu",
    "noise.omega_imu",
    "noise.accel_imu",
    "noise.alpha_imu",
    "noise.joint_pos",
    "noise.joint_vel",
    "noise.mocap_linear",
    "noise.mocap_angular",
    "camera.enabled",
    "camera.rate_hz",
    "camera.height",
    "camera.width",
    "camera.fov_deg",
    "camera.max_range",
    "camera.pitch_deg",
    "camera.offset_x",
    "camera.offset_y",
    "camera.offset_z",
    "robot.mass",
    "robot.ixx",
    "robot.iyy",
    "robot.izz",
    "robot.hip_x",
    "robot.hip_y",
    "robot.l1",
    "robot.l2",
    "robot.l3",
    "robot.stance_height",
    "command.profile",
    "command.speed",
    "command.v_std",
    "command.v_max",
    "command.yaw_rate_std",
    "command.yaw_rate_max",
    "command.ramp",
    "alloc.friction",
    "alloc.fz_min",
    "alloc.fz_max",
    "alloc.kp",
    "alloc.kd",
];

impl SimConfig {
    /// Apply `key = value` overrides on top of `self`; unknown keys and bad
    /// values are [`SimError::Config`] naming the field.
    pub fn apply_kv(mut self, map: &BTreeMap<String, String>) -> Result<Self, SimError> {
        for key in map.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(SimError::Config(format!("unknown field `{key}`")));
            }
        }
        let r = KvReader::new(map);
        self.dt = r.f64_or("dt", self.dt)?;
        self.duration = r.f64_or("duration", self.duration)?;
        self.seed = r.u64_or("seed", self.seed)?;
        self.gait.period = r.f64_or("gait.period", self.gait.period)?;
        self.gait.duty = r.f64_or("gait.duty", self.gait.duty)?;
        self.gait.swing_height = r.f64_or("gait.swing_height", self.gait.swing_height)?;

        if let Some(kind) = r.get("terrain.kind") {
            self.terrain = match kind {
                "flat" => TerrainConfig::Flat,
                "incline" => TerrainConfig::Incline {
                    angle: r.f64_or("terrain.angle", 0.12)?,
                },
                "slippery" => TerrainConfig::Slippery {
                    slip_rate: r.f64_or("terrain.slip_rate", 0.2)?,
                    slip_magnitude: r.f64_or("terrain.slip_magnitude", 0.5)?,
                },
                "rough" => TerrainConfig::Rough {
                    amplitude: r.f64_or("terrain.amplitude", 0.04)?,
                    sink_rate: r.f64_or("terrain.sink_rate", 0.02)?,
                    max_sink: r.f64_or("terrain.max_sink", 0.03)?,
                },
                other => {
                    return Err(SimError::Config(format!(
                        "field `terrain.kind`: unknown terrain `{other}` \
                         (expected flat|incline|slippery|rough)"
                    )))
                }
            };
        }

        self.noise.theta_imu = r.f64_or("noise.theta_imu", self.noise.theta_imu)?;
        self.noise.omega_imu = r.f64_or("noise.omega_imu", self.noise.omega_imu)?;
        self.noise.accel_imu = r.f64_or("noise.accel_imu", self.noise.accel_imu)?;
        self.noise.alpha_imu = r.f64_or("noise.alpha_imu", self.noise.alpha_imu)?;
        self.noise.joint_pos = r.f64_or("noise.joint_pos", self.noise.joint_pos)?;
        self.noise.joint_vel = r.f64_or("noise.joint_vel", self.noise.joint_vel)?;
        self.noise.mocap_linear = r.f64_or("noise.mocap_linear", self.noise.mocap_linear)?;
        self.noise.mocap_angular = r.f64_or("noise.mocap_angular", self.noise.mocap_angular)?;

        self.camera.enabled = r.bool_or("camera.enabled", self.camera.enabled)?;
        self.camera.rate_hz = r.f64_or("camera.rate_hz", self.camera.rate_hz)?;
        self.camera.height = r.usize_or("camera.height", self.camera.height)?;
        self.camera.width = r.usize_or("camera.width", self.camera.width)?;
        self.camera.fov_deg = r.f64_or("camera.fov_deg", self.camera.fov_deg)?;
        self.camera.max_range = r.f64_or("camera.max_range", self.camera.max_range)?;
        self.camera.pitch_deg = r.f64_or("camera.pitch_deg", self.camera.pitch_deg)?;
        self.camera.offset[0] = r.f64_or("camera.offset_x", self.camera.offset[0])?;
        self.camera.offset[1] = r.f64_or("camera.offset_y", self.camera.offset[1])?;
        self.camera.offset[2] = r.f64_or("camera.offset_z", self.camera.offset[2])?;

        self.robot.mass = r.f64_or("robot.mass", self.robot.mass)?;
        self.robot.inertia_diag[0] = r.f64_or("robot.ixx", self.robot.inertia_diag[0])?;
        self.robot.inertia_diag[1] = r.f64_or("robot.iyy", self.robot.inertia_diag[1])?;
        self.robot.inertia_diag[2] = r.f64_or("robot.izz", self.robot.inertia_diag[2])?;
        self.robot.hip_x = r.f64_or("robot.hip_x", self.robot.hip_x)?;
        self.robot.hip_y = r.f64_or("robot.hip_y", self.robot.hip_y)?;
        self.robot.l1 = r.f64_or("robot.l1", self.robot.l1)?;
        self.robot.l2 = r.f64_or("robot.l2", self.robot.l2)?;
        self.robot.l3 = r.f64_or("robot.l3", self.robot.l3)?;
        self.robot.stance_height = r.f64_or("robot.stance_height", self.robot.stance_height)?;

        if let Some(profile) = r.get("command.profile") {
            self.command.profile = match profile {
                "standing" => CommandProfile::Standing,
                "straight" => CommandProfile::StraightLine,
                "random_walk" => CommandProfile::RandomWalk,
                other => {
                    return Err(SimError::Config(format!(
                        "field `command.profile`: unknown profile `{other}` \
                         (expected standing|straight|random_walk)"
                    )))
                }
            };
        }
        self.command.speed = r.f64_or("command.speed", self.command.speed)?;
        self.command.v_std = r.f64_or("command.v_std", self.command.v_std)?;
        self.command.v_max = r.f64_or("command.v_max", self.command.v_max)?;
        self.command.yaw_rate_std = r.f64_or("command.yaw_rate_std", self.command.yaw_rate_std)?;
        self.command.yaw_rate_max = r.f64_or("command.yaw_rate_max", self.command.yaw_rate_max)?;
        self.command.ramp = r.f64_or("command.ramp", self.command.ramp)?;

        self.alloc.friction = r.f64_or("alloc.friction", self.alloc.friction)?;
        self.alloc.fz_min = r.f64_or("alloc.fz_min", self.alloc.fz_min)?;
        self.alloc.fz_max = r.f64_or("alloc.fz_max", self.alloc.fz_max)?;
        self.alloc.kp = r.f64_or("alloc.kp", self.alloc.kp)?;
        self.alloc.kd = r.f64_or("alloc.kd", self.alloc.kd)?;

        self.validate()?;
        Ok(self)
    }

    pub fn from_kv_text(text: &str) -> Result<Self, SimError> {
        Self::default().apply_kv(&kv::parse(text)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0) {
            return Err(SimError::Config("field `dt`: must be positive".into()));
        }
        if !(self.duration > 0.0) {
            return Err(SimError::Config("field `duration`: must be positive".into()));
        }
        if !(self.gait.duty > 0.0 && self.gait.duty < 1.0) {
            return Err(SimError::Config("field `gait.duty`: must be in (0, 1)".into()));
        }
        if !(self.gait.period > 2.0 * self.dt) {
            return Err(SimError::Config(
                "field `gait.period`: must exceed two control periods".into(),
            ));
        }
        if self.camera.enabled && (self.camera.height == 0 || self.camera.width == 0) {
            return Err(SimError::Config("field `camera.height`: must be nonzero".into()));
        }
        self.robot.physical()?;
        self.robot.geometry()?;
        Ok(())
    }

    /// Full flat serialization; `apply_kv` of the result reproduces `self`.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("dt", format!("{:?}", self.dt));
        put("duration", format!("{:?}", self.duration));
        put("seed", self.seed.to_string());
        put("gait.period", format!("{:?}", self.gait.period));
        put("gait.duty", format!("{:?}", self.gait.duty));
        put("gait.swing_height", format!("{:?}", self.gait.swing_height));
        put("terrain.kind", self.terrain.kind().to_string());
        match self.terrain {
            TerrainConfig::Flat => {}
            TerrainConfig::Incline { angle } => put("terrain.angle", format!("{angle:?}")),
            TerrainConfig::Slippery {
                slip_rate,
                slip_magnitude,
            } => {
                put("terrain.slip_rate", format!("{slip_rate:?}"));
                put("terrain.slip_magnitude", format!("{slip_magnitude:?}"));
            }
            TerrainConfig::Rough {
                amplitude,
                sink_rate,
                max_sink,
            } => {
                put("terrain.amplitude", format!("{amplitude:?}"));
                put("terrain.sink_rate", format!("{sink_rate:?}"));
                put("terrain.max_sink", format!("{max_sink:?}"));
            }
        }
        put("noise.theta_imu", format!("{:?}", self.noise.theta_imu));
        put("noise.omega_imu", format!("{:?}", self.noise.omega_imu));
        put("noise.accel_imu", format!("{:?}", self.noise.accel_imu));
        put("noise.alpha_imu", format!("{:?}", self.noise.alpha_imu));
        put("noise.joint_pos", format!("{:?}", self.noise.joint_pos));
        put("noise.joint_vel", format!("{:?}", self.noise.joint_vel));
        put("noise.mocap_linear", format!("{:?}", self.noise.mocap_linear));
        put(
            "noise.mocap_angular",
            format!("{:?}", self.noise.mocap_angular),
        );
        put("camera.enabled", self.camera.enabled.to_string());
        put("camera.rate_hz", format!("{:?}", self.camera.rate_hz));
        put("camera.height", self.camera.height.to_string());
        put("camera.width", self.camera.width.to_string());
        put("camera.fov_deg", format!("{:?}", self.camera.fov_deg));
        put("camera.max_range", format!("{:?}", self.camera.max_range));
        put("camera.pitch_deg", format!("{:?}", self.camera.pitch_deg));
        put("camera.offset_x", format!("{:?}", self.camera.offset[0]));
        put("camera.offset_y", format!("{:?}", self.camera.offset[1]));
        put("camera.offset_z", format!("{:?}", self.camera.offset[2]));
        put("robot.mass", format!("{:?}", self.robot.mass));
        put("robot.ixx", format!("{:?}", self.robot.inertia_diag[0]));
        put("robot.iyy", format!("{:?}", self.robot.inertia_diag[1]));
        put("robot.izz", format!("{:?}", self.robot.inertia_diag[2]));
        put("robot.hip_x", format!("{:?}", self.robot.hip_x));
        put("robot.hip_y", format!("{:?}", self.robot.hip_y));
        put("robot.l1", format!("{:?}", self.robot.l1));
        put("robot.l2", format!("{:?}", self.robot.l2));
        put("robot.l3", format!("{:?}", self.robot.l3));
        put(
            "robot.stance_height",
            format!("{:?}", self.robot.stance_height),
        );
        put("command.profile", self.command.profile.name().to_string());
        put("command.speed", format!("{:?}", self.command.speed));
        put("command.v_std", format!("{:?}", self.command.v_std));
        put("command.v_max", format!("{:?}", self.command.v_max));
        put(
            "command.yaw_rate_std",
            format!("{:?}", self.command.yaw_rate_std),
        );
        put(
            "command.yaw_rate_max",
            format!("{:?}", self.command.yaw_rate_max),
        );
        put("command.ramp", format!("{:?}", self.command.ramp));
        put("alloc.friction", format!("{:?}", self.alloc.friction));
        put("alloc.fz_min", format!("{:?}", self.alloc.fz_min));
        put("alloc.fz_max", format!("{:?}", self.alloc.fz_max));
        put("alloc.kp", format!("{:?}", self.alloc.kp));
        put("alloc.kd", format!("{:?}", self.alloc.kd));
        m
    }

    /// Number of control frames in the trajectory.
    pub fn frame_count(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip_preserves_config() {
        let mut cfg = SimConfig::default();
        cfg.seed = 42;
        cfg.terrain = TerrainConfig::Rough {
            amplitude: 0.03,
            sink_rate: 0.01,
            max_sink: 0.02,
        };
        cfg.command.profile = CommandProfile::StraightLine;
        let back = SimConfig::default().apply_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let map = kv::parse("terrain.knid = flat\n").unwrap();
        let err = SimConfig::default().apply_kv(&map).unwrap_err();
        assert!(err.to_string().contains("terrain.knid"));
    }

    #[test]
    fn invalid_terrain_name_is_rejected() {
        let map = kv::parse("terrain.kind = lava\n").unwrap();
        let err = SimConfig::default().apply_kv(&map).unwrap_err();
        assert!(err.to_string().contains("terrain.kind"));
        assert!(err.to_string().contains("lava"));
    }

    #[test]
    fn invalid_duty_is_rejected() {
        let map = kv::parse("gait.duty = 1.5\n").unwrap();
        assert!(SimConfig::default().apply_kv(&map).is_err());
    }
}
