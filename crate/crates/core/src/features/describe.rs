//! Descriptor extraction: gradient histograms, binary intensity tests and a
//! pluggable patch descriptor. Every method samples the same square support of
//! side `SUPPORT_FACTOR * scale`, rotated to the keypoint orientation.

use std::f64::consts::{SQRT_2, TAU};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::filters::{split, Gradients, Plane};
use super::{Feature, FeatureSet, Keypoint, Method};
use crate::error::{invalid, Result};
use crate::image::Image;

/// Support side in multiples of the keypoint scale.
pub const SUPPORT_FACTOR: f64 = 8.0;
/// Side of the resampled patch fed to a [`PatchDescriptor`].
pub const PATCH_SIDE: usize = 32;
/// Number of intensity comparisons in a binary descriptor.
pub const BINARY_PAIRS: usize = 512;

const SPATIAL_BINS: usize = 4;
const ORIENT_BINS: usize = 8;
const SIFT_CLAMP: f64 = 0.2;
const PATTERN_SEED: u64 = 0x4652_4b50;

/// Maps a normalized 32x32 luma patch to a raw descriptor vector. Outputs are
/// L2-normalized and mapped from `[-1, 1]` into `[0, 1]` by the caller.
pub trait PatchDescriptor: Send + Sync {
    fn describe(&self, patch: &[f32]) -> Vec<f32>;
}

/// Fixed Gaussian random projection of the standardized patch. Stands in for a
/// trained network when none is configured.
#[derive(Clone, Debug)]
pub struct RandomProjection {
    matrix: Vec<f32>,
}

impl RandomProjection {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = PATCH_SIDE * PATCH_SIDE;
        let scale = 1.0 / (n as f64).sqrt();
        let matrix = (0..128 * n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        Self { matrix }
    }
}

impl Default for RandomProjection {
    fn default() -> Self {
        Self::new(0x5eed)
    }
}

impl PatchDescriptor for RandomProjection {
    fn describe(&self, patch: &[f32]) -> Vec<f32> {
        let n = patch.len() as f64;
        let mean = patch.iter().map(|&v| v as f64).sum::<f64>() / n;
        let std = (patch.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n).sqrt();
        let z: Vec<f64> = if std > 1e-12 { patch.iter().map(|&v| (v as f64 - mean) / std).collect() } else { vec![0.0; patch.len()] };
        self.matrix.chunks_exact(patch.len()).map(|row| row.iter().zip(&z).map(|(&a, b)| a as f64 * b).sum::<f64>() as f32).collect()
    }
}

/// Half-width of the region a descriptor may touch, for any orientation.
fn support_radius(kp: &Keypoint) -> f64 {
    SUPPORT_FACTOR * kp.scale as f64 / 2.0 * SQRT_2 + 1.0
}

fn support_fits(kp: &Keypoint, h: usize, w: usize) -> bool {
    let r = support_radius(kp);
    let (x, y) = (kp.x as f64, kp.y as f64);
    x - r >= 0.0 && y - r >= 0.0 && x + r <= (w - 1) as f64 && y + r <= (h - 1) as f64
}

fn l2_normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn sift(grad: &Gradients, kp: &Keypoint) -> Vec<f32> {
    let side = SUPPORT_FACTOR * kp.scale as f64;
    let bin = side / SPATIAL_BINS as f64;
    let radius = (side / 2.0 * SQRT_2).ceil() as isize;
    let (xi, fx) = split(kp.x);
    let (yi, fy) = split(kp.y);
    let ori = kp.orientation as f64;
    let (cos, sin) = (ori.cos(), ori.sin());
    let half = SPATIAL_BINS as f64 / 2.0;
    let mut hist = vec![0.0f64; SPATIAL_BINS * SPATIAL_BINS * ORIENT_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (ox, oy) = (dx as f64 - fx, dy as f64 - fy);
            let u = (cos * ox + sin * oy) / bin;
            let v = (-sin * ox + cos * oy) / bin;
            let (bu, bv) = (u + half - 0.5, v + half - 0.5);
            if bu <= -1.0 || bv <= -1.0 || bu >= SPATIAL_BINS as f64 || bv >= SPATIAL_BINS as f64 {
                continue;
            }
            let (r, c) = ((yi + dy) as usize, (xi + dx) as usize);
            let weight = (-(u * u + v * v) / (2.0 * half * half)).exp();
            let m = grad.mag.at(r, c) * weight;
            if m == 0.0 {
                continue;
            }
            let rel = (grad.ang.at(r, c) - ori).rem_euclid(TAU);
            let bo = rel / TAU * ORIENT_BINS as f64;
            let (u0, v0, o0) = (bu.floor(), bv.floor(), bo.floor());
            let (du, dv, d_o) = (bu - u0, bv - v0, bo - o0);
            for (iv, wv) in [(v0 as isize, 1.0 - dv), (v0 as isize + 1, dv)] {
                if !(0..SPATIAL_BINS as isize).contains(&iv) {
                    continue;
                }
                for (iu, wu) in [(u0 as isize, 1.0 - du), (u0 as isize + 1, du)] {
                    if !(0..SPATIAL_BINS as isize).contains(&iu) {
                        continue;
                    }
                    for (io, wo) in [(o0 as usize % ORIENT_BINS, 1.0 - d_o), ((o0 as usize + 1) % ORIENT_BINS, d_o)] {
                        let idx = (iv as usize * SPATIAL_BINS + iu as usize) * ORIENT_BINS + io;
                        hist[idx] += m * wv * wu * wo;
                    }
                }
            }
        }
    }
    l2_normalize(&mut hist);
    hist.iter_mut().for_each(|v| *v = v.min(SIFT_CLAMP));
    l2_normalize(&mut hist);
    hist.into_iter().map(|v| (v as f32).clamp(0.0, 1.0)).collect()
}

/// Retina-like sampling pattern: seven rings of six points plus the centre,
/// as offsets in units of the support half-side.
fn pattern() -> &'static ([(f64, f64); 43], Vec<(usize, usize)>) {
    static PATTERN: OnceLock<([(f64, f64); 43], Vec<(usize, usize)>)> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut pts = [(0.0, 0.0); 43];
        for ring in 0..7 {
            let radius = 1.0 - ring as f64 / 7.0;
            let phase = if ring % 2 == 1 { TAU / 12.0 } else { 0.0 };
            for j in 0..6 {
                let a = phase + j as f64 * TAU / 6.0;
                pts[ring * 6 + j] = (radius * a.cos(), radius * a.sin());
            }
        }
        let mut pairs: Vec<(usize, usize)> = (0..43).flat_map(|i| (i + 1..43).map(move |j| (i, j))).collect();
        pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(PATTERN_SEED));
        pairs.truncate(BINARY_PAIRS);
        (pts, pairs)
    })
}

fn binary(smooth: &Plane, kp: &Keypoint) -> Vec<f32> {
    let (pts, pairs) = pattern();
    let half = SUPPORT_FACTOR * kp.scale as f64 / 2.0;
    let (xi, fx) = split(kp.x);
    let (yi, fy) = split(kp.y);
    let ori = kp.orientation as f64;
    let (cos, sin) = (ori.cos(), ori.sin());
    let vals: Vec<f64> = pts
        .iter()
        .map(|&(px, py)| {
            let (ox, oy) = (px * half, py * half);
            let rx = cos * ox - sin * oy;
            let ry = sin * ox + cos * oy;
            smooth.sample(yi, fy + ry, xi, fx + rx)
        })
        .collect();
    let mut bytes = [0u8; BINARY_PAIRS / 8];
    for (i, &(a, b)) in pairs.iter().enumerate() {
        if vals[a] > vals[b] {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    bytes.iter().map(|&b| b as f32 / 255.0).collect()
}

fn patch(luma: &Plane, kp: &Keypoint) -> Vec<f32> {
    let spacing = SUPPORT_FACTOR * kp.scale as f64 / PATCH_SIDE as f64;
    let (xi, fx) = split(kp.x);
    let (yi, fy) = split(kp.y);
    let ori = kp.orientation as f64;
    let (cos, sin) = (ori.cos(), ori.sin());
    let c = PATCH_SIDE as f64 / 2.0;
    let mut out = Vec::with_capacity(PATCH_SIDE * PATCH_SIDE);
    for r in 0..PATCH_SIDE {
        for col in 0..PATCH_SIDE {
            let (ox, oy) = ((col as f64 + 0.5 - c) * spacing, (r as f64 + 0.5 - c) * spacing);
            let rx = cos * ox - sin * oy;
            let ry = sin * ox + cos * oy;
            out.push(luma.sample(yi, fy + ry, xi, fx + rx) as f32);
        }
    }
    out
}

fn learned(luma: &Plane, kp: &Keypoint, net: &dyn PatchDescriptor) -> Result<Vec<f32>> {
    let raw = net.describe(&patch(luma, kp));
    if raw.len() != Method::Learned.channels() {
        return Err(invalid!("patch descriptor returned {} values, expected {}", raw.len(), Method::Learned.channels()));
    }
    let mut v: Vec<f64> = raw.iter().map(|&x| x as f64).collect();
    l2_normalize(&mut v);
    Ok(v.into_iter().map(|x| (((x + 1.0) / 2.0) as f32).clamp(0.0, 1.0)).collect())
}

fn check_keypoints(image: &Image, keypoints: &[Keypoint]) -> Result<()> {
    for kp in keypoints {
        kp.check(image.height(), image.width())?;
    }
    Ok(())
}

fn extract(image: &Image, keypoints: &[Keypoint], method: Method, net: Option<&dyn PatchDescriptor>) -> Result<FeatureSet> {
    check_keypoints(image, keypoints)?;
    let (h, w) = (image.height(), image.width());
    let kept: Vec<&Keypoint> = keypoints.iter().filter(|k| support_fits(k, h, w)).collect();
    let luma = Plane::luma(image);
    let features = match method {
        Method::Sift => {
            let grad = Gradients::of(&luma);
            kept.into_iter().map(|k| Feature { keypoint: *k, descriptor: sift(&grad, k) }).collect()
        }
        Method::Binary => {
            let smooth = luma.blur(1.0);
            kept.into_iter().map(|k| Feature { keypoint: *k, descriptor: binary(&smooth, k) }).collect()
        }
        Method::Learned => {
            let default_net;
            let net = match net {
                Some(n) => n,
                None => {
                    default_net = RandomProjection::default();
                    &default_net as &dyn PatchDescriptor
                }
            };
            kept.into_iter()
                .map(|k| Ok(Feature { keypoint: *k, descriptor: learned(&luma, k, net)? }))
                .collect::<Result<Vec<_>>>()?
        }
    };
    FeatureSet::new(method, h, w, features)
}

/// Describes each keypoint whose support lies inside the image; the others are
/// dropped. Learned descriptors use the default [`RandomProjection`].
pub fn extract_descriptors(image: &Image, keypoints: &[Keypoint], method: Method) -> Result<FeatureSet> {
    extract(image, keypoints, method, None)
}

/// Learned descriptors computed by a caller-supplied patch network.
pub fn extract_learned(image: &Image, keypoints: &[Keypoint], net: &dyn PatchDescriptor) -> Result<FeatureSet> {
    extract(image, keypoints, Method::Learned, Some(net))
}
