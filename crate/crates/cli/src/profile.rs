//! Resolved run configuration: profile defaults, then config-file overrides,
//! then command-line seed.
//!
//! The `paper` profile keeps the full-size hyperparameters (224×224 images,
//! 128-wide latent, 4-layer GRU of 128, 60 s trajectories). The `small`
//! profile is the CI-scale variant: 64×64 depth at patch 8, narrower
//! networks, 12 s trajectories, and a learning rate that converges in the
//! few hundred steps such runs afford.

use std::collections::BTreeMap;
use std::path::Path;

use optistate_core::{KalmanFilter, NoiseConfig};
use optistate_nn::features::input_dim;
use optistate_nn::gru::{GruConfig, GruTrainConfig};
use optistate_nn::vit::{VitConfig, VitTrainConfig};
use optistate_sim::{
    config::{CommandProfile, TerrainConfig},
    kv, SimConfig,
};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Small,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Small => "small",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, CliError> {
        match name {
            "paper" => Ok(Profile::Paper),
            "small" => Ok(Profile::Small),
            other => Err(CliError::Config(format!(
                "unknown profile `{other}` (expected paper|small)"
            ))),
        }
    }
}

/// Per-terrain corruption parameters used when generating the dataset grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainGrid {
    pub slip_rate: f64,
    pub slip_magnitude: f64,
    pub incline_angle: f64,
    pub rough_amplitude: f64,
    pub rough_sink_rate: f64,
    pub rough_max_sink: f64,
}

impl Default for TerrainGrid {
    fn default() -> Self {
        Self {
            slip_rate: 0.2,
            slip_magnitude: 0.5,
            incline_angle: 0.12,
            rough_amplitude: 0.10,
            rough_sink_rate: 0.02,
            rough_max_sink: 0.03,
        }
    }
}

pub const TERRAIN_CYCLE: [&str; 4] = ["flat", "slippery", "incline", "rough"];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    /// Base simulation settings; terrain and command profile are assigned
    /// per trajectory from the grid.
    pub sim: SimConfig,
    pub grid: TerrainGrid,
    pub train_trajectories: usize,
    pub test_trajectories: usize,
    pub train_duration: f64,
    pub test_duration: f64,
    pub vit: VitConfig,
    pub vit_train: VitTrainConfig,
    /// Cap on distinct depth images sampled for autoencoder training.
    pub vit_max_images: usize,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub gru_horizon: usize,
    pub gru_train: GruTrainConfig,
    /// Kalman covariance diagonals: [θ, r, ω, v] blocks.
    pub kf_q: [f64; 4],
    pub kf_r: [f64; 4],
}

impl PipelineConfig {
    pub fn defaults(profile: Profile) -> Self {
        let mut sim = SimConfig::default();
        match profile {
            Profile::Paper => Self {
                profile,
                seed: 0,
                sim,
                grid: TerrainGrid::default(),
                train_trajectories: 16,
                test_trajectories: 4,
                train_duration: 60.0,
                test_duration: 60.0,
                vit: VitConfig::paper(),
                vit_train: VitTrainConfig {
                    epochs: 100,
                    ..VitTrainConfig::default()
                },
                vit_max_images: 2048,
                gru_hidden: 128,
                gru_layers: 4,
                gru_horizon: 10,
                gru_train: GruTrainConfig {
                    epochs: 4,
                    ..GruTrainConfig::default()
                },
                kf_q: [1e-4, 1e-4, 1e-3, 1e-2],
                kf_r: [1e-4, 1e-4, 1e-3, 1e-2],
            },
            Profile::Small => {
                sim.camera.height = 64;
                sim.camera.width = 64;
                sim.camera.rate_hz = 20.0;
                Self {
                    profile,
                    seed: 0,
                    sim,
                    grid: TerrainGrid::default(),
                    train_trajectories: 16,
                    test_trajectories: 4,
                    train_duration: 12.0,
                    test_duration: 12.0,
                    vit: VitConfig {
                        img_h: 64,
                        img_w: 64,
                        patch_size: 8,
                        embed_dim: 32,
                        depth: 2,
                        mlp_ratio: 2,
                        n_heads: 4,
                    },
                    vit_train: VitTrainConfig {
                        epochs: 30,
                        batch_size: 32,
                        ..VitTrainConfig::default()
                    },
                    vit_max_images: 256,
                    gru_hidden: 64,
                    gru_layers: 2,
                    gru_horizon: 10,
                    gru_train: GruTrainConfig {
                        epochs: 8,
                        lr: 2e-3,
                        stride: 4,
                        ..GruTrainConfig::default()
                    },
                    kf_q: [1e-4, 1e-4, 1e-3, 1e-2],
                    kf_r: [1e-4, 1e-4, 1e-3, 1e-2],
                }
            }
        }
    }

    /// Defaults → config file → seed flag.
    pub fn resolve(
        profile: Profile,
        config_path: Option<&Path>,
        seed: Option<u64>,
    ) -> Result<Self, CliError> {
        let mut cfg = Self::defaults(profile);
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("config `{}`: {e}", path.display())))?;
            cfg = cfg.apply_kv_text(&text)?;
        }
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    pub fn apply_kv_text(mut self, text: &str) -> Result<Self, CliError> {
        let map = kv::parse(text)?;
        let mut sim_map = BTreeMap::new();
        let mut rest = BTreeMap::new();
        for (k, v) in map {
            if let Some(stripped) = k.strip_prefix("sim.") {
                sim_map.insert(stripped.to_string(), v);
            } else {
                rest.insert(k, v);
            }
        }
        self.sim = self.sim.apply_kv(&sim_map)?;

        const KNOWN: &[&str] = &[
            "seed",
            "run.train_trajectories",
            "run.test_trajectories",
            "run.train_duration",
            "run.test_duration",
            "run.slip_rate",
            "run.slip_magnitude",
            "run.incline_angle",
            "run.rough_amplitude",
            "run.rough_sink_rate",
            "run.rough_max_sink",
            "vit.embed_dim",
            "vit.patch_size",
            "vit.depth",
            "vit.mlp_ratio",
            "vit.n_heads",
            "vit.epochs",
            "vit.batch_size",
            "vit.lr",
            "vit.weight_decay",
            "vit.beta1",
            "vit.beta2",
            "vit.augment",
            "vit.max_images",
            "gru.hidden_size",
            "gru.n_layers",
            "gru.horizon",
            "gru.epochs",
            "gru.batch_size",
            "gru.lr",
            "gru.weight_decay",
            "gru.stride",
            "kf.q_theta",
            "kf.q_pos",
            "kf.q_omega",
            "kf.q_vel",
            "kf.r_theta",
            "kf.r_height",
            "kf.r_omega",
            "kf.r_vel",
        ];
        for key in rest.keys() {
            if !KNOWN.contains(&key.as_str()) {
                return Err(CliError::Config(format!("unknown field `{key}`")));
            }
        }
        let r = kv::KvReader::new(&rest);
        self.seed = r.u64_or("seed", self.seed)?;
        self.train_trajectories = r.usize_or("run.train_trajectories", self.train_trajectories)?;
        self.test_trajectories = r.usize_or("run.test_trajectories", self.test_trajectories)?;
        self.train_duration = r.f64_or("run.train_duration", self.train_duration)?;
        self.test_duration = r.f64_or("run.test_duration", self.test_duration)?;
        self.grid.slip_rate = r.f64_or("run.slip_rate", self.grid.slip_rate)?;
        self.grid.slip_magnitude = r.f64_or("run.slip_magnitude", self.grid.slip_magnitude)?;
        self.grid.incline_angle = r.f64_or("run.incline_angle", self.grid.incline_angle)?;
        self.grid.rough_amplitude = r.f64_or("run.rough_amplitude", self.grid.rough_amplitude)?;
        self.grid.rough_sink_rate = r.f64_or("run.rough_sink_rate", self.grid.rough_sink_rate)?;
        self.grid.rough_max_sink = r.f64_or("run.rough_max_sink", self.grid.rough_max_sink)?;

        self.vit.embed_dim = r.usize_or("vit.embed_dim", self.vit.embed_dim)?;
        self.vit.patch_size = r.usize_or("vit.patch_size", self.vit.patch_size)?;
        self.vit.depth = r.usize_or("vit.depth", self.vit.depth)?;
        self.vit.mlp_ratio = r.usize_or("vit.mlp_ratio", self.vit.mlp_ratio)?;
        self.vit.n_heads = r.usize_or("vit.n_heads", self.vit.n_heads)?;
        self.vit_train.epochs = r.usize_or("vit.epochs", self.vit_train.epochs)?;
        self.vit_train.batch_size = r.usize_or("vit.batch_size", self.vit_train.batch_size)?;
        self.vit_train.lr = r.f64_or("vit.lr", self.vit_train.lr)?;
        self.vit_train.weight_decay = r.f64_or("vit.weight_decay", self.vit_train.weight_decay)?;
        self.vit_train.beta1 = r.f64_or("vit.beta1", self.vit_train.beta1)?;
        self.vit_train.beta2 = r.f64_or("vit.beta2", self.vit_train.beta2)?;
        self.vit_train.augment = r.bool_or("vit.augment", self.vit_train.augment)?;
        self.vit_max_images = r.usize_or("vit.max_images", self.vit_max_images)?;

        self.gru_hidden = r.usize_or("gru.hidden_size", self.gru_hidden)?;
        self.gru_layers = r.usize_or("gru.n_layers", self.gru_layers)?;
        self.gru_horizon = r.usize_or("gru.horizon", self.gru_horizon)?;
        self.gru_train.epochs = r.usize_or("gru.epochs", self.gru_train.epochs)?;
        self.gru_train.batch_size = r.usize_or("gru.batch_size", self.gru_train.batch_size)?;
        self.gru_train.lr = r.f64_or("gru.lr", self.gru_train.lr)?;
        self.gru_train.weight_decay = r.f64_or("gru.weight_decay", self.gru_train.weight_decay)?;
        self.gru_train.stride = r.usize_or("gru.stride", self.gru_train.stride)?;

        self.kf_q[0] = r.f64_or("kf.q_theta", self.kf_q[0])?;
        self.kf_q[1] = r.f64_or("kf.q_pos", self.kf_q[1])?;
        self.kf_q[2] = r.f64_or("kf.q_omega", self.kf_q[2])?;
        self.kf_q[3] = r.f64_or("kf.q_vel", self.kf_q[3])?;
        self.kf_r[0] = r.f64_or("kf.r_theta", self.kf_r[0])?;
        self.kf_r[1] = r.f64_or("kf.r_height", self.kf_r[1])?;
        self.kf_r[2] = r.f64_or("kf.r_omega", self.kf_r[2])?;
        self.kf_r[3] = r.f64_or("kf.r_vel", self.kf_r[3])?;

        // Keep camera dims and the ViT image dims coherent.
        self.vit.img_h = self.sim.camera.height;
        self.vit.img_w = self.sim.camera.width;
        self.vit.validate().map_err(CliError::from)?;
        Ok(self)
    }

    fn terrain_for(&self, kind: &str) -> TerrainConfig {
        match kind {
            "flat" => TerrainConfig::Flat,
            "slippery" => TerrainConfig::Slippery {
                slip_rate: self.grid.slip_rate,
                slip_magnitude: self.grid.slip_magnitude,
            },
            "incline" => TerrainConfig::Incline {
                angle: self.grid.incline_angle,
            },
            "rough" => TerrainConfig::Rough {
                amplitude: self.grid.rough_amplitude,
                sink_rate: self.grid.rough_sink_rate,
                max_sink: self.grid.rough_max_sink,
            },
            other => unreachable!("unknown terrain kind {other}"),
        }
    }

    fn configured_sim(&self, kind: &str, duration: f64, seed: u64) -> SimConfig {
        let mut sim = self.sim.clone();
        sim.duration = duration;
        sim.seed = seed;
        sim.terrain = self.terrain_for(kind);
        // Straight-line commands on slippery and inclined ground, random
        // wandering elsewhere.
        sim.command.profile = match kind {
            "slippery" | "incline" => CommandProfile::StraightLine,
            _ => CommandProfile::RandomWalk,
        };
        sim
    }

    /// The i-th training trajectory cycles through the terrain grid.
    pub fn train_sim(&self, index: usize) -> (String, SimConfig) {
        let kind = TERRAIN_CYCLE[index % TERRAIN_CYCLE.len()];
        let sim = self.configured_sim(kind, self.train_duration, self.seed.wrapping_add(index as u64));
        (format!("train_{index:02}_{kind}"), sim)
    }

    /// One held-out trajectory per terrain, disjoint seeds from training.
    pub fn test_sim(&self, index: usize) -> (String, SimConfig) {
        let kind = TERRAIN_CYCLE[index % TERRAIN_CYCLE.len()];
        let sim = self.configured_sim(
            kind,
            self.test_duration,
            self.seed.wrapping_add(10_000 + index as u64),
        );
        (format!("test_{kind}_{index:02}"), sim)
    }

    pub fn noise_config(&self) -> NoiseConfig {
        NoiseConfig::diagonal(self.kf_q, self.kf_r)
    }

    pub fn kalman_filter(&self) -> Result<KalmanFilter, CliError> {
        Ok(KalmanFilter::new(
            self.sim.robot.physical()?,
            self.sim.robot.geometry()?,
            self.noise_config(),
            self.sim.dt,
        ))
    }

    pub fn gru_config(&self) -> GruConfig {
        GruConfig {
            input_dim: input_dim(self.vit.latent_dim()),
            hidden_size: self.gru_hidden,
            n_layers: self.gru_layers,
            horizon: self.gru_horizon,
        }
    }

    /// Flat echo for manifests.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut m: BTreeMap<String, String> = self
            .sim
            .to_kv()
            .into_iter()
            .map(|(k, v)| (format!("sim.{k}"), v))
            .collect();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("profile", self.profile.name().to_string());
        put("seed", self.seed.to_string());
        put("run.train_trajectories", self.train_trajectories.to_string());
        put("run.test_trajectories", self.test_trajectories.to_string());
        put("run.train_duration", format!("{:?}", self.train_duration));
        put("run.test_duration", format!("{:?}", self.test_duration));
        put("run.slip_rate", format!("{:?}", self.grid.slip_rate));
        put("run.slip_magnitude", format!("{:?}", self.grid.slip_magnitude));
        put("run.incline_angle", format!("{:?}", self.grid.incline_angle));
        put("run.rough_amplitude", format!("{:?}", self.grid.rough_amplitude));
        put("run.rough_sink_rate", format!("{:?}", self.grid.rough_sink_rate));
        put("run.rough_max_sink", format!("{:?}", self.grid.rough_max_sink));
        put("vit.embed_dim", self.vit.embed_dim.to_string());
        put("vit.patch_size", self.vit.patch_size.to_string());
        put("vit.depth", self.vit.depth.to_string());
        put("vit.mlp_ratio", self.vit.mlp_ratio.to_string());
        put("vit.n_heads", self.vit.n_heads.to_string());
        put("vit.epochs", self.vit_train.epochs.to_string());
        put("vit.batch_size", self.vit_train.batch_size.to_string());
        put("vit.lr", format!("{:?}", self.vit_train.lr));
        put("vit.weight_decay", format!("{:?}", self.vit_train.weight_decay));
        put("vit.beta1", format!("{:?}", self.vit_train.beta1));
        put("vit.beta2", format!("{:?}", self.vit_train.beta2));
        put("vit.augment", self.vit_train.augment.to_string());
        put("vit.max_images", self.vit_max_images.to_string());
        put("gru.hidden_size", self.gru_hidden.to_string());
        put("gru.n_layers", self.gru_layers.to_string());
        put("gru.horizon", self.gru_horizon.to_string());
        put("gru.epochs", self.gru_train.epochs.to_string());
        put("gru.batch_size", self.gru_train.batch_size.to_string());
        put("gru.lr", format!("{:?}", self.gru_train.lr));
        put("gru.weight_decay", format!("{:?}", self.gru_train.weight_decay));
        put("gru.stride", self.gru_train.stride.to_string());
        put("kf.q_theta", format!("{:?}", self.kf_q[0]));
        put("kf.q_pos", format!("{:?}", self.kf_q[1]));
        put("kf.q_omega", format!("{:?}", self.kf_q[2]));
        put("kf.q_vel", format!("{:?}", self.kf_q[3]));
        put("kf.r_theta", format!("{:?}", self.kf_r[0]));
        put("kf.r_height", format!("{:?}", self.kf_r[1]));
        put("kf.r_omega", format!("{:?}", self.kf_r[2]));
        put("kf.r_vel", format!("{:?}", self.kf_r[3]));
        m
    }
}
