//! Reference trunk trajectory from operator velocity commands.
//!
//! Random-walk commands use a mean-reverting (OU) process on forward/lateral
//! speed and yaw rate; straight-line runs hold a constant forward speed.
//! The position reference integrates the commanded velocity and rides the
//! terrain at the nominal stance height.

use nalgebra::Vector3;
use optistate_core::{state::rot_z, TrunkState};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::config::{CommandConfig, CommandProfile};
use crate::terrain::Terrain;

#[derive(Debug, Clone)]
pub struct ReferenceGenerator {
    config: CommandConfig,
    stance_height: f64,
    /// Commanded body-frame forward/lateral speed.
    v_body: Vector3<f64>,
    yaw_rate: f64,
    /// Integrated reference pose.
    x: f64,
    y: f64,
    yaw: f64,
    prev_z: f64,
    prev_pitch: f64,
    t: f64,
    rng: ChaCha12Rng,
}

impl ReferenceGenerator {
    pub fn new(config: CommandConfig, terrain: &Terrain, stance_height: f64, rng: ChaCha12Rng) -> Self {
        let z0 = terrain.height(0.0, 0.0) + stance_height;
        let mut gen = Self {
            config,
            stance_height,
            v_body: Vector3::zeros(),
            yaw_rate: 0.0,
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
            prev_z: z0,
            prev_pitch: 0.0,
            t: 0.0,
            rng,
        };
        gen.prev_pitch = gen.pitch_ref(terrain);
        gen
    }

    fn ramp(&self) -> f64 {
        if self.config.ramp <= 0.0 {
            1.0
        } else {
            (self.t / self.config.ramp).min(1.0)
        }
    }

    /// The trunk is commanded level on every terrain; the legs absorb
    /// slopes and bumps.
    fn pitch_ref(&self, _terrain: &Terrain) -> f64 {
        0.0
    }

    /// Commanded world-frame velocity right now.
    pub fn commanded_velocity(&self) -> Vector3<f64> {
        rot_z(self.yaw) * (self.v_body * self.ramp())
    }

    /// Advance the command process and integrate the reference by `dt`.
    pub fn step(&mut self, dt: f64, terrain: &Terrain) -> TrunkState {
        match self.config.profile {
            CommandProfile::Standing => {
                self.v_body = Vector3::zeros();
                self.yaw_rate = 0.0;
            }
            CommandProfile::StraightLine => {
                self.v_body = Vector3::new(self.config.speed, 0.0, 0.0);
                self.yaw_rate = 0.0;
            }
            CommandProfile::RandomWalk => {
                // OU with correlation time τ = 2 s.
                let tau = 2.0;
                let sigma = self.config.v_std * (2.0 * dt / tau).sqrt();
                for i in 0..2 {
                    let xi: f64 = self.rng.random_range(-1.0..1.0) * 1.732;
                    self.v_body[i] += -self.v_body[i] / tau * dt + sigma * xi;
                    self.v_body[i] = self.v_body[i].clamp(-self.config.v_max, self.config.v_max);
                }
                let sigma_yaw = self.config.yaw_rate_std * (2.0 * dt / tau).sqrt();
                let xi: f64 = self.rng.random_range(-1.0..1.0) * 1.732;
                self.yaw_rate += -self.yaw_rate / tau * dt + sigma_yaw * xi;
                self.yaw_rate = self
                    .yaw_rate
                    .clamp(-self.config.yaw_rate_max, self.config.yaw_rate_max);
            }
        }

        let v_world = self.commanded_velocity();
        self.x += v_world.x * dt;
        self.y += v_world.y * dt;
        self.yaw += self.yaw_rate * self.ramp() * dt;
        self.t += dt;

        let z = terrain.height(self.x, self.y) + self.stance_height;
        let vz = (z - self.prev_z) / dt;
        let pitch = self.pitch_ref(terrain);
        let pitch_rate = (pitch - self.prev_pitch) / dt;
        self.prev_z = z;
        self.prev_pitch = pitch;

        TrunkState::new(
            Vector3::new(0.0, pitch, self.yaw),
            Vector3::new(self.x, self.y, z),
            Vector3::new(0.0, pitch_rate, self.yaw_rate * self.ramp()),
            Vector3::new(v_world.x, v_world.y, vz),
        )
    }
}
