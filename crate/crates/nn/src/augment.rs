//! Depth-image augmentation: rotation, horizontal flip, and zoom, composed
//! into a single inverse affine map with bilinear sampling (edge clamp),
//! then clamped back to [0, 1].

use optistate_core::DepthImage;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Maximum rotation magnitude, deg.
pub const MAX_ROTATION_DEG: f64 = 15.0;
/// Zoom range.
pub const ZOOM_RANGE: (f64, f64) = (0.9, 1.1);

fn sample_bilinear(img: &DepthImage, row: f64, col: f64) -> f64 {
    let clamp_r = |r: f64| r.clamp(0.0, (img.height - 1) as f64);
    let clamp_c = |c: f64| c.clamp(0.0, (img.width - 1) as f64);
    let (row, col) = (clamp_r(row), clamp_c(col));
    let r0 = row.floor() as usize;
    let c0 = col.floor() as usize;
    let r1 = (r0 + 1).min(img.height - 1);
    let c1 = (c0 + 1).min(img.width - 1);
    let fr = row - r0 as f64;
    let fc = col - c0 as f64;
    let v00 = img.get(r0, c0) as f64;
    let v01 = img.get(r0, c1) as f64;
    let v10 = img.get(r1, c0) as f64;
    let v11 = img.get(r1, c1) as f64;
    let top = v00 + (v01 - v00) * fc;
    let bottom = v10 + (v11 - v10) * fc;
    top + (bottom - top) * fr
}

/// Deterministic core: rotate by `angle_deg`, flip horizontally if `flip`,
/// zoom by `zoom` (crop > 1, pad-by-edge < 1), about the image center.
pub fn augment_with(img: &DepthImage, angle_deg: f64, flip: bool, zoom: f64) -> DepthImage {
    let (h, w) = (img.height, img.width);
    let cr = (h as f64 - 1.0) / 2.0;
    let cc = (w as f64 - 1.0) / 2.0;
    let (sin, cos) = (-angle_deg.to_radians()).sin_cos();
    let mut pixels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            // Inverse zoom about the center.
            let y = (r as f64 - cr) / zoom;
            let mut x = (c as f64 - cc) / zoom;
            // Inverse flip (its own inverse).
            if flip {
                x = -x;
            }
            // Inverse rotation.
            let src_r = cr + (sin * x + cos * y);
            let src_c = cc + (cos * x - sin * y);
            pixels.push(sample_bilinear(img, src_r, src_c).clamp(0.0, 1.0) as f32);
        }
    }
    DepthImage::new(h, w, pixels)
}

/// Randomized augmentation with the documented parameter ranges.
pub fn augment(img: &DepthImage, rng: &mut ChaCha12Rng) -> DepthImage {
    let angle = rng.random_range(-MAX_ROTATION_DEG..MAX_ROTATION_DEG);
    let flip = rng.random_bool(0.5);
    let zoom = rng.random_range(ZOOM_RANGE.0..ZOOM_RANGE.1);
    augment_with(img, angle, flip, zoom)
}
