//! Difference-of-Gaussians blob detector, used where a scale-aware detector
//! is wanted instead of Harris corners.

use serde::{Deserialize, Serialize};

use super::filters::{dominant_orientation, Gradients, Plane};
use super::{rank_and_truncate, Keypoint};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DogConfig {
    pub sigma0: f64,
    /// Scale levels per octave.
    pub intervals: usize,
    /// Minimum `|DoG|` on the `[0, 1]` intensity scale.
    pub contrast_threshold: f64,
    /// Principal-curvature ratio above which edge responses are rejected.
    pub edge_ratio: f64,
    /// Octaves stop once the shorter side drops below this.
    pub min_side: usize,
}

impl Default for DogConfig {
    fn default() -> Self {
        Self { sigma0: 1.6, intervals: 3, contrast_threshold: 0.01, edge_ratio: 10.0, min_side: 16 }
    }
}

pub fn detect_dog(image: &Image, max_keypoints: usize, cfg: &DogConfig) -> Vec<Keypoint> {
    let s = cfg.intervals.max(1);
    if max_keypoints == 0 || image.height().min(image.width()) < cfg.min_side {
        return Vec::new();
    }
    let luma = Plane::luma(image);
    let grad = Gradients::of(&luma);
    let k = 2f64.powf(1.0 / s as f64);
    let mut base = luma.blur((cfg.sigma0 * cfg.sigma0 - 0.25).max(0.0).sqrt());
    let mut kps = Vec::new();
    let mut octave = 0;
    while base.h.min(base.w) >= cfg.min_side {
        let mut levels = vec![base.clone()];
        for i in 1..s + 3 {
            let prev = cfg.sigma0 * k.powi(i as i32 - 1);
            let inc = (prev * k).powi(2) - prev * prev;
            levels.push(levels[i - 1].blur(inc.sqrt()));
        }
        let dogs: Vec<Plane> = levels
            .windows(2)
            .map(|w| Plane { h: w[0].h, w: w[0].w, data: w[1].data.iter().zip(&w[0].data).map(|(a, b)| a - b).collect() })
            .collect();
        let factor = (1usize << octave) as f64;
        for i in 1..=s {
            let (cur, lo, hi) = (&dogs[i], &dogs[i - 1], &dogs[i + 1]);
            for y in 1..cur.h - 1 {
                for x in 1..cur.w - 1 {
                    let v = cur.at(y, x);
                    if v.abs() <= cfg.contrast_threshold {
                        continue;
                    }
                    let mut extremum = true;
                    'scan: for p in [lo, cur, hi] {
                        for dy in 0..3 {
                            for dx in 0..3 {
                                if std::ptr::eq(p, cur) && dy == 1 && dx == 1 {
                                    continue;
                                }
                                let n = p.at(y + dy - 1, x + dx - 1);
                                if (v > 0.0 && n >= v) || (v < 0.0 && n <= v) {
                                    extremum = false;
                                    break 'scan;
                                }
                            }
                        }
                    }
                    if !extremum {
                        continue;
                    }
                    let dxx = cur.at(y, x + 1) + cur.at(y, x - 1) - 2.0 * v;
                    let dyy = cur.at(y + 1, x) + cur.at(y - 1, x) - 2.0 * v;
                    let dxy = 0.25 * (cur.at(y + 1, x + 1) - cur.at(y + 1, x - 1) - cur.at(y - 1, x + 1) + cur.at(y - 1, x - 1));
                    let (tr, det) = (dxx + dyy, dxx * dyy - dxy * dxy);
                    let r = cfg.edge_ratio;
                    if det <= 0.0 || tr * tr * r >= (r + 1.0).powi(2) * det {
                        continue;
                    }
                    let (kx, ky) = ((x as f64 * factor) as f32, (y as f64 * factor) as f32);
                    if kx as usize >= image.width() || ky as usize >= image.height() {
                        continue;
                    }
                    let scale = (cfg.sigma0 * k.powi(i as i32) * factor) as f32;
                    let mut kp = Keypoint::new(kx, ky, v.abs() as f32, scale);
                    kp.orientation = dominant_orientation(&grad, kx, ky, scale);
                    kps.push(kp);
                }
            }
        }
        base = levels[s].decimate();
        octave += 1;
    }
    rank_and_truncate(kps, max_keypoints)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_a_blob_near_its_centre() {
        let img = Image::from_fn(64, 64, |r, c| {
            let d2 = (r as f32 - 32.0).powi(2) + (c as f32 - 30.0).powi(2);
            [(-d2 / 18.0).exp(); 3]
        })
        .unwrap();
        let kps = detect_dog(&img, 10, &DogConfig::default());
        assert!(!kps.is_empty());
        assert!((kps[0].x - 30.0).abs() <= 2.0 && (kps[0].y - 32.0).abs() <= 2.0, "{:?}", kps[0]);
    }

    #[test]
    fn flat_and_small_images_are_empty() {
        assert!(detect_dog(&Image::filled(64, 64, 0.4).unwrap(), 10, &DogConfig::default()).is_empty());
        assert!(detect_dog(&Image::filled(8, 64, 0.4).unwrap(), 10, &DogConfig::default()).is_empty());
    }
}
