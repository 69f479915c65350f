//! Procedural depth rendering: ray casts from a trunk-mounted camera
//! pitched down at the terrain.
//!
//! Planar terrains (flat, slippery, incline) intersect rays in closed form;
//! heightfields march the ray and refine the hit by bisection. Depths are
//! Euclidean distances clamped and normalized by the camera range, so pixels
//! that miss the ground saturate at 1.

use nalgebra::{Matrix3, Vector3};
use optistate_core::{state::rot_y, DepthImage, Rotation, TrunkState};

use crate::config::CameraConfig;
use crate::terrain::Terrain;

/// Camera-to-body rotation: optical axes (x right, y down, z forward) into
/// body axes (x forward, y left, z up), then pitched down about body y.
fn camera_to_body(pitch_rad: f64) -> Matrix3<f64> {
    let permute = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    rot_y(pitch_rad) * permute
}

/// Ray origin and per-pixel direction generator for a pose.
struct RayCaster {
    origin: Vector3<f64>,
    rotation: Matrix3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
}

impl RayCaster {
    fn new(pose: &TrunkState, camera: &CameraConfig) -> Self {
        let body_to_world = Rotation::from_euler(pose.theta());
        let offset = Vector3::new(camera.offset[0], camera.offset[1], camera.offset[2]);
        let origin = pose.position() + body_to_world.rotate(&offset);
        let rotation = body_to_world.matrix() * camera_to_body(camera.pitch_deg.to_radians());
        let focal = (camera.width as f64 / 2.0) / (camera.fov_deg.to_radians() / 2.0).tan();
        Self {
            origin,
            rotation,
            focal,
            cx: (camera.width as f64 - 1.0) / 2.0,
            cy: (camera.height as f64 - 1.0) / 2.0,
        }
    }

    fn direction(&self, row: usize, col: usize) -> Vector3<f64> {
        let cam = Vector3::new(
            (col as f64 - self.cx) / self.focal,
            (row as f64 - self.cy) / self.focal,
            1.0,
        );
        (self.rotation * cam).normalize()
    }
}

/// Euclidean distance to the closed-form ray/plane hit, if any.
fn plane_distance(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    plane: (f64, f64, f64),
    max_range: f64,
) -> f64 {
    let (gx, gy, z0) = plane;
    let denom = dir.z - gx * dir.x - gy * dir.y;
    if denom.abs() < 1e-12 {
        return max_range;
    }
    let t = (gx * origin.x + gy * origin.y + z0 - origin.z) / denom;
    if t <= 0.0 {
        max_range
    } else {
        t.min(max_range)
    }
}

/// March + bisect against a heightfield.
fn heightfield_distance(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    terrain: &Terrain,
    max_range: f64,
) -> f64 {
    let below = |t: f64| {
        let p = origin + dir * t;
        p.z <= terrain.height(p.x, p.y)
    };
    let step = 0.02;
    let mut prev = 1e-3;
    if below(prev) {
        return prev;
    }
    let mut t = prev + step;
    while t < max_range {
        if below(t) {
            // Bisection refinement to ~1e-9 m.
            let (mut lo, mut hi) = (prev, t);
            for _ in 0..50 {
                let mid = 0.5 * (lo + hi);
                if below(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev = t;
        t += step;
    }
    max_range
}

/// Render the depth image for one pose; deterministic in (terrain, pose).
pub fn render_depth(terrain: &Terrain, pose: &TrunkState, camera: &CameraConfig) -> DepthImage {
    let caster = RayCaster::new(pose, camera);
    let plane = terrain.as_plane();
    let mut pixels = Vec::with_capacity(camera.height * camera.width);
    for row in 0..camera.height {
        for col in 0..camera.width {
            let dir = caster.direction(row, col);
            let dist = match plane {
                Some(p) => plane_distance(&caster.origin, &dir, p, camera.max_range),
                None => heightfield_distance(&caster.origin, &dir, terrain, camera.max_range),
            };
            pixels.push((dist / camera.max_range).clamp(0.0, 1.0) as f32);
        }
    }
    DepthImage::new(camera.height, camera.width, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TerrainConfig;

    fn small_camera() -> CameraConfig {
        CameraConfig {
            height: 32,
            width: 32,
            ..CameraConfig::default()
        }
    }

    fn nominal_pose() -> TrunkState {
        TrunkState::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 0.3),
            Vector3::zeros(),
            Vector3::zeros(),
        )
    }

    #[test]
    fn flat_ground_depth_shrinks_toward_lower_rows() {
        // The camera pitches down, so lower rows point more steeply at the
        // ground and hit it sooner.
        let img = render_depth(
            &Terrain::new(TerrainConfig::Flat, 0),
            &nominal_pose(),
            &small_camera(),
        );
        let col = 16;
        for row in 1..img.height {
            assert!(
                img.get(row, col) <= img.get(row - 1, col) + 1e-6,
                "row {row} got deeper"
            );
        }
    }

    #[test]
    fn raising_the_trunk_increases_mean_depth() {
        let cam = small_camera();
        let terrain = Terrain::new(TerrainConfig::Flat, 0);
        let low = render_depth(&terrain, &nominal_pose(), &cam);
        let raised = TrunkState::new(
            Vector3::zeros(),
            Vector3::new(0.0, 0.0, 0.4),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let high = render_depth(&terrain, &raised, &cam);
        assert!(high.mean() > low.mean());
    }

    #[test]
    fn center_pixel_matches_analytic_ray_plane_intersection() {
        // Oracle: the 45°-down center ray from height h travels h·√2 to a
        // flat floor. Odd-sized image puts a pixel exactly on the axis.
        let cam = CameraConfig {
            height: 33,
            width: 33,
            ..CameraConfig::default()
        };
        let img = render_depth(
            &Terrain::new(TerrainConfig::Flat, 0),
            &nominal_pose(),
            &cam,
        );
        let cam_height = 0.3 + cam.offset[2] * 0.0_f64.cos() + 0.0;
        // Camera origin z = trunk z + offset z (level pose).
        let origin_z = 0.3 + cam.offset[2];
        let expected = origin_z * 2.0_f64.sqrt() / cam.max_range;
        let _ = cam_height;
        let got = img.get(16, 16) as f64;
        assert!(
            (got - expected).abs() < 1e-6,
            "got {got}, expected {expected}"
        );
    }

    #[test]
    fn heightfield_matches_plane_when_flat() {
        // Zero-amplitude rough terrain must agree with the closed form.
        let cam = small_camera();
        let flat = render_depth(
            &Terrain::new(TerrainConfig::Flat, 0),
            &nominal_pose(),
            &cam,
        );
        let rough = render_depth(
            &Terrain::new(
                TerrainConfig::Rough {
                    amplitude: 0.0,
                    sink_rate: 0.0,
                    max_sink: 0.0,
                },
                0,
            ),
            &nominal_pose(),
            &cam,
        );
        for (a, b) in flat.pixels.iter().zip(rough.pixels.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let cam = small_camera();
        let terrain = Terrain::new(
            TerrainConfig::Rough {
                amplitude: 0.04,
                sink_rate: 0.02,
                max_sink: 0.03,
            },
            9,
        );
        let a = render_depth(&terrain, &nominal_pose(), &cam);
        let b = render_depth(&terrain, &nominal_pose(), &cam);
        assert_eq!(a, b);
        assert!(a.in_unit_range());
    }
}
