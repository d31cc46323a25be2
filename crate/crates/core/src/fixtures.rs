//! Deterministic synthetic data: textured scenes, warped pairs with known
//! homographies, and noise images.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::image::Image;
use crate::mitigate::BoundingBox;

/// Continuous scene description that can be rendered under any homography.
#[derive(Clone, Debug)]
pub struct Scene {
    background: [[f64; 4]; 3],
    shapes: Vec<Shape>,
}

#[derive(Clone, Debug)]
struct Shape {
    cx: f64,
    cy: f64,
    half_w: f64,
    half_h: f64,
    angle: f64,
    round: bool,
    color: [f64; 3],
    stripe_freq: f64,
    stripe_angle: f64,
    stripe_depth: f64,
}

impl Shape {
    /// Colour at a point inside the shape, if it is inside.
    fn shade(&self, x: f64, y: f64) -> Option<[f64; 3]> {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (u, v) = ((c * dx + s * dy) / self.half_w, (-s * dx + c * dy) / self.half_h);
        let inside = if self.round { u * u + v * v <= 1.0 } else { u.abs() <= 1.0 && v.abs() <= 1.0 };
        if !inside {
            return None;
        }
        let t = dx * self.stripe_angle.cos() + dy * self.stripe_angle.sin();
        let m = 1.0 - self.stripe_depth * (0.5 + 0.5 * (t * self.stripe_freq).sin()).round();
        Some(self.color.map(|v| v * m))
    }
}

impl Scene {
    /// Random shapes over a smooth background inside `[0, width] x [0, height]`.
    pub fn random(seed: u64, height: f64, width: f64, shapes: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut background = [[0.0; 4]; 3];
        for ch in &mut background {
            *ch = [rng.random_range(0.3..0.7), rng.random_range(0.1..0.3), rng.random_range(0.1..0.4), rng.random_range(0.0..2.0 * PI)];
        }
        let scale = height.min(width);
        let shapes = (0..shapes)
            .map(|_| Shape {
                cx: rng.random_range(0.0..width),
                cy: rng.random_range(0.0..height),
                half_w: rng.random_range(0.03..0.12) * scale,
                half_h: rng.random_range(0.03..0.12) * scale,
                angle: rng.random_range(0.0..PI),
                round: rng.random_bool(0.3),
                color: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
                stripe_freq: rng.random_range(0.3..1.2),
                stripe_angle: rng.random_range(0.0..PI),
                stripe_depth: if rng.random_bool(0.5) { rng.random_range(0.3..0.7) } else { 0.0 },
            })
            .collect();
        Self { background, shapes }
    }

    /// Colour at scene coordinates; later shapes are drawn on top.
    pub fn color(&self, x: f64, y: f64) -> [f64; 3] {
        for s in self.shapes.iter().rev() {
            if let Some(c) = s.shade(x, y) {
                return c;
            }
        }
        let mut out = [0.0; 3];
        for (o, b) in out.iter_mut().zip(&self.background) {
            *o = b[0] + b[1] * (b[2] * (x + 0.7 * y) + b[3]).sin();
        }
        out
    }

    /// Renders pixel `(r, c)` of the output from scene point `to_scene * (c, r, 1)`,
    /// averaging a 2x2 grid of sub-samples.
    pub fn render(&self, height: usize, width: usize, to_scene: &Matrix3<f64>) -> Result<Image> {
        Image::from_fn(height, width, |r, c| {
            let mut acc = [0.0; 3];
            for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let p = to_scene * Vector3::new(c as f64 + ox - 0.5, r as f64 + oy - 0.5, 1.0);
                let v = self.color(p[0] / p[2], p[1] / p[2]);
                for k in 0..3 {
                    acc[k] += v[k] / 4.0;
                }
            }
            acc.map(|v| v as f32)
        })
    }
}

fn translation(tx: f64, ty: f64) -> Matrix3<f64> {
    Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0)
}

fn rotation(angle: f64) -> Matrix3<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Textured synthetic image.
pub fn synthetic_scene(seed: u64, height: usize, width: usize) -> Result<Image> {
    let shapes = 10 + (height * width) / 300;
    Scene::random(seed, height as f64, width as f64, shapes).render(height, width, &Matrix3::identity())
}

/// Two views of one scene; `homography` maps pixel coordinates of `a` to `b`.
#[derive(Clone, Debug)]
pub struct WarpedPair {
    pub a: Image,
    pub b: Image,
    pub homography: Matrix3<f64>,
}

impl WarpedPair {
    /// Position in `b` of pixel position `(x, y)` in `a`.
    pub fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let p = self.homography * Vector3::new(x, y, 1.0);
        (p[0] / p[2], p[1] / p[2])
    }
}

/// Both views are `size x size` crops of a larger scene; the second is
/// rotated by `angle_deg` about the centre and shifted by `shift` pixels.
pub fn warped_pair(seed: u64, size: usize, angle_deg: f64, shift: (f64, f64)) -> Result<WarpedPair> {
    let big = size as f64 * 2.0;
    let scene = Scene::random(seed, big, big, 10 + (size * size * 4) / 300);
    let off = size as f64 / 2.0;
    let half = size as f64 / 2.0;
    let to_scene_a = translation(off, off);
    let to_scene_b = translation(off + half + shift.0, off + half + shift.1)
        * rotation(angle_deg.to_radians())
        * translation(-half, -half);
    let a = scene.render(size, size, &to_scene_a)?;
    let b = scene.render(size, size, &to_scene_b)?;
    let inv_b = to_scene_b.try_inverse().expect("rigid transforms are invertible");
    Ok(WarpedPair { a, b, homography: inv_b * to_scene_a })
}

/// Independent uniform noise per pixel and channel, lightly smoothed so
/// corners are stable.
pub fn noise_image(seed: u64, height: usize, width: usize) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f32> = (0..height * width * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    Image::from_fn(height, width, |r, c| {
        let mut acc = [0.0f32; 3];
        let mut n = 0.0;
        for dr in 0..2 {
            for dc in 0..2 {
                let (rr, cc) = ((r + dr).min(height - 1), (c + dc).min(width - 1));
                for k in 0..3 {
                    acc[k] += raw[(rr * width + cc) * 3 + k];
                }
                n += 1.0;
            }
        }
        acc.map(|v| v / n)
    })
}

/// A scene with one high-contrast object and its bounding box, for suppression tests.
pub fn scene_with_object(seed: u64, size: usize) -> Result<(Image, BoundingBox)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0b1e_c7);
    let s = size as f64;
    let (w, h) = (rng.random_range(0.25..0.35) * s, rng.random_range(0.25..0.35) * s);
    let (x0, y0) = (rng.random_range(0.15 * s..0.85 * s - w), rng.random_range(0.15 * s..0.85 * s - h));
    let base = synthetic_scene(seed, size, size)?;
    let img = Image::from_fn(size, size, |r, c| {
        let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
        if x >= x0 && x <= x0 + w && y >= y0 && y <= y0 + h {
            let check = ((((x - x0) / 5.0) as i64 + ((y - y0) / 5.0) as i64) % 2) as f32;
            [0.9 * check + 0.05, 0.2 + 0.6 * (1.0 - check), 0.1]
        } else {
            base.get(r, c)
        }
    })?;
    Ok((img, BoundingBox::new(x0, y0, x0 + w, y0 + h, "person", 0.9)?))
}
