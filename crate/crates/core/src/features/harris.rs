//! Harris corner detector.

use serde::{Deserialize, Serialize};

use super::filters::{dominant_orientation, gaussian_kernel, luma_sobel, Gradients, Plane};
use super::{rank_and_truncate, Keypoint};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarrisConfig {
    /// Standard deviation of the structure-tensor window.
    pub sigma: f64,
    pub k: f64,
    /// Candidates must exceed this fraction of the strongest response.
    pub threshold_ratio: f64,
    /// Scale assigned to every keypoint (Harris is single-scale).
    pub scale: f32,
}

impl Default for HarrisConfig {
    fn default() -> Self {
        Self { sigma: 1.0, k: 0.04, threshold_ratio: 0.01, scale: 2.0 }
    }
}

/// Harris response `det(M) - k trace(M)^2` of the Gaussian-weighted structure
/// tensor, row-major.
pub(crate) fn harris_response(image: &Image, cfg: &HarrisConfig) -> Plane {
    let (gx, gy) = luma_sobel(image);
    let prod = |a: &Plane, b: &Plane| Plane { h: a.h, w: a.w, data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect() };
    let kernel = gaussian_kernel(cfg.sigma);
    let sxx = prod(&gx, &gx).separable(&kernel);
    let syy = prod(&gy, &gy).separable(&kernel);
    let sxy = prod(&gx, &gy).separable(&kernel);
    let data = (0..sxx.data.len())
        .map(|i| {
            let (a, b, c) = (sxx.data[i], syy.data[i], sxy.data[i]);
            a * b - c * c - cfg.k * (a + b) * (a + b)
        })
        .collect();
    Plane { h: sxx.h, w: sxx.w, data }
}

/// Quadratic peak offset from three samples, limited to half a pixel.
fn refine(l: f64, c: f64, r: f64) -> f64 {
    let denom = l - 2.0 * c + r;
    if denom < 0.0 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Up to `max_keypoints` corners, strongest first. Images smaller than the
/// structure-tensor window yield no keypoints.
pub fn detect_harris(image: &Image, max_keypoints: usize, cfg: &HarrisConfig) -> Vec<Keypoint> {
    let window = 2 * (3.0 * cfg.sigma).ceil() as usize + 1;
    let (h, w) = (image.height(), image.width());
    if max_keypoints == 0 || h < window || w < window {
        return Vec::new();
    }
    let resp = harris_response(image, cfg);
    let max = resp.data.iter().copied().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let thresh = cfg.threshold_ratio * max;
    let luma = Plane::luma(image);
    let grad = Gradients::of(&luma);
    let mut kps = Vec::new();
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let v = resp.at(y, x);
            if v <= thresh || v <= 0.0 {
                continue;
            }
            // Strict maximum over earlier neighbours, non-strict over later ones.
            let mut is_max = true;
            'nms: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dy == 0 && dx == 0 {
                        continue;
                    }
                    let n = resp.at((y as isize + dy) as usize, (x as isize + dx) as usize);
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > v || (earlier && n == v) {
                        is_max = false;
                        break 'nms;
                    }
                }
            }
            if !is_max {
                continue;
            }
            let ox = refine(resp.at(y, x - 1), v, resp.at(y, x + 1));
            let oy = refine(resp.at(y - 1, x), v, resp.at(y + 1, x));
            let (kx, ky) = ((x as f64 + ox) as f32, (y as f64 + oy) as f32);
            let mut kp = Keypoint::new(kx, ky, v as f32, cfg.scale);
            kp.orientation = dominant_orientation(&grad, kx, ky, cfg.scale);
            kps.push(kp);
        }
    }
    rank_and_truncate(kps, max_keypoints)
}
