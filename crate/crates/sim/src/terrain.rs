//! Ground-height model shared by the gait, the sensors, and the renderer.

use crate::config::TerrainConfig;

/// Evaluated terrain: a height function plus the corruption parameters.
#[derive(Debug, Clone, Copy)]
pub struct Terrain {
    config: TerrainConfig,
    seed: u64,
}

impl Terrain {
    pub fn new(config: TerrainConfig, seed: u64) -> Self {
        Self { config, seed }
    }

    pub fn config(&self) -> &TerrainConfig {
        self.config_ref()
    }

    fn config_ref(&self) -> &TerrainConfig {
        &self.config
    }

    /// Ground height z at world (x, y).
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self.config {
            TerrainConfig::Flat | TerrainConfig::Slippery { .. } => 0.0,
            TerrainConfig::Incline { angle } => angle.tan() * x,
            TerrainConfig::Rough { amplitude, .. } => {
                // Gentle undulation (4 m wavelength) with a light 1 m
                // ripple on top; slopes stay walkable at the default
                // amplitude while absolute height varies along the path.
                amplitude
                    * (value_noise(self.seed, x / 4.0, y / 4.0)
                        + 0.25 * value_noise(self.seed ^ 0x9e37_79b9, x / 1.0, y / 1.0))
                    / 1.25
            }
        }
    }

    /// Terrain slope (∂h/∂x, ∂h/∂y) by central differences.
    pub fn gradient(&self, x: f64, y: f64) -> (f64, f64) {
        match self.config {
            TerrainConfig::Flat | TerrainConfig::Slippery { .. } => (0.0, 0.0),
            TerrainConfig::Incline { angle } => (angle.tan(), 0.0),
            TerrainConfig::Rough { .. } => {
                let h = 1e-4;
                (
                    (self.height(x + h, y) - self.height(x - h, y)) / (2.0 * h),
                    (self.height(x, y + h) - self.height(x, y - h)) / (2.0 * h),
                )
            }
        }
    }

    /// Plane representation when the terrain is exactly planar, as
    /// `(dz/dx, dz/dy, z0)`; `None` for heightfields.
    pub fn as_plane(&self) -> Option<(f64, f64, f64)> {
        match self.config {
            TerrainConfig::Flat | TerrainConfig::Slippery { .. } => Some((0.0, 0.0, 0.0)),
            TerrainConfig::Incline { angle } => Some((angle.tan(), 0.0, 0.0)),
            TerrainConfig::Rough { .. } => None,
        }
    }
}

fn splitmix64(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic lattice value in [-1, 1].
fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(seed ^ (ix as u64).wrapping_mul(0x517c_c1b7_2722_0a95)
        ^ (iy as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
    (h >> 11) as f64 / ((1u64 << 53) as f64) * 2.0 - 1.0
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinearly interpolated, smoothstepped value noise in [-1, 1].
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let tx = smoothstep(x - x0);
    let ty = smoothstep(y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let v00 = lattice(seed, ix, iy);
    let v10 = lattice(seed, ix + 1, iy);
    let v01 = lattice(seed, ix, iy + 1);
    let v11 = lattice(seed, ix + 1, iy + 1);
    let a = v00 + (v10 - v00) * tx;
    let b = v01 + (v11 - v01) * tx;
    a + (b - a) * ty
}
