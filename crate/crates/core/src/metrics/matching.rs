//! Descriptor matching with geometric verification.

use nalgebra::{Matrix3, SMatrix, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::features::{FeatureSet, Method};

const SAMPLE: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Nearest distance must be below this fraction of the second nearest.
    pub ratio: f64,
    pub mutual: bool,
    pub ransac_iterations: usize,
    /// Maximum point-to-epipolar-line distance in pixels, checked in both images.
    pub epipolar_threshold: f64,
    /// Inliers needed for a pair to count as matched.
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { ratio: 0.8, mutual: true, ransac_iterations: 2000, epipolar_threshold: 3.0, min_inliers: 20, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub putative: usize,
    pub inliers: usize,
    pub success: bool,
}

fn bytes_of(desc: &[f32]) -> Vec<u8> {
    desc.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

/// Pairwise descriptor distances, row-major `|a| x |b|`.
fn distances(a: &FeatureSet, b: &FeatureSet) -> Vec<f64> {
    let (na, nb) = (a.len(), b.len());
    let mut d = vec![0.0; na * nb];
    match a.method() {
        Method::Binary => {
            let ba: Vec<Vec<u8>> = a.features().iter().map(|f| bytes_of(&f.descriptor)).collect();
            let bb: Vec<Vec<u8>> = b.features().iter().map(|f| bytes_of(&f.descriptor)).collect();
            for (i, x) in ba.iter().enumerate() {
                for (j, y) in bb.iter().enumerate() {
                    d[i * nb + j] = x.iter().zip(y).map(|(p, q)| (p ^ q).count_ones()).sum::<u32>() as f64;
                }
            }
        }
        Method::Sift | Method::Learned => {
            for (i, x) in a.features().iter().enumerate() {
                for (j, y) in b.features().iter().enumerate() {
                    let s: f64 = x.descriptor.iter().zip(&y.descriptor).map(|(p, q)| ((p - q) as f64).powi(2)).sum();
                    d[i * nb + j] = s.sqrt();
                }
            }
        }
    }
    d
}

/// Mutual nearest neighbours passing the ratio test, as `(index in a, index in b)`.
pub fn putative_matches(a: &FeatureSet, b: &FeatureSet, cfg: &MatchConfig) -> Result<Vec<(usize, usize)>> {
    if a.method() != b.method() {
        return Err(invalid!("cannot match {} against {} descriptors", a.method(), b.method()));
    }
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Ok(Vec::new());
    }
    let d = distances(a, b);
    let best_in_b = |i: usize| -> (usize, f64, f64) {
        let mut best = (usize::MAX, f64::INFINITY, f64::INFINITY);
        for j in 0..nb {
            let v = d[i * nb + j];
            if v < best.1 {
                best = (j, v, best.1);
            } else if v < best.2 {
                best.2 = v;
            }
        }
        best
    };
    let best_in_a = |j: usize| -> usize {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..na {
            if d[i * nb + j] < best.1 {
                best = (i, d[i * nb + j]);
            }
        }
        best.0
    };
    let mut out = Vec::new();
    for i in 0..na {
        let (j, d1, d2) = best_in_b(i);
        if j == usize::MAX {
            continue;
        }
        let passes_ratio = d2.is_infinite() || d1 < cfg.ratio * d2;
        if passes_ratio && (!cfg.mutual || best_in_a(j) == i) {
            out.push((i, j));
        }
    }
    Ok(out)
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizer(pts: &[[f64; 2]]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0] / n, y + p[1] / n));
    let mean_d = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    let s = if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalized eight-point estimate of `F` with `x2^T F x1 = 0`, rank 2.
pub fn fundamental_from_points(p1: &[[f64; 2]], p2: &[[f64; 2]]) -> Option<Matrix3<f64>> {
    if p1.len() < SAMPLE || p1.len() != p2.len() {
        return None;
    }
    let (t1, t2) = (normalizer(p1), normalizer(p2));
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (a, b) in p1.iter().zip(p2) {
        let x1 = t1 * Vector3::new(a[0], a[1], 1.0);
        let x2 = t2 * Vector3::new(b[0], b[1], 1.0);
        let row = SMatrix::<f64, 1, 9>::from_row_slice(&[
            x2[0] * x1[0],
            x2[0] * x1[1],
            x2[0],
            x2[1] * x1[0],
            x2[1] * x1[1],
            x2[1],
            x1[0],
            x1[1],
            1.0,
        ]);
        ata += row.transpose() * row;
    }
    let eig = SymmetricEigen::new(ata);
    let k = eig.eigenvalues.imin();
    let f = eig.eigenvectors.column(k);
    let fh = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let mut svd = fh.svd(true, true);
    svd.singular_values[2] = 0.0;
    let fr = svd.recompose().ok()?;
    let out = t2.transpose() * fr * t1;
    let norm = out.norm();
    (norm.is_finite() && norm > 0.0).then(|| out / norm)
}

/// Larger of the two point-to-epipolar-line distances.
pub fn epipolar_distance(f: &Matrix3<f64>, a: [f64; 2], b: [f64; 2]) -> f64 {
    let x1 = Vector3::new(a[0], a[1], 1.0);
    let x2 = Vector3::new(b[0], b[1], 1.0);
    let l2 = f * x1;
    let l1 = f.transpose() * x2;
    let r = x2.dot(&l2).abs();
    let d = |l: &Vector3<f64>| {
        let n = l[0].hypot(l[1]);
        if n > 1e-12 {
            r / n
        } else if r < 1e-12 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    d(&l2).max(d(&l1))
}

/// Largest inlier count over seeded eight-point RANSAC hypotheses.
pub fn ransac_inliers(p1: &[[f64; 2]], p2: &[[f64; 2]], cfg: &MatchConfig) -> usize {
    let n = p1.len();
    if n < SAMPLE {
        return 0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = |f: &Matrix3<f64>| (0..n).filter(|&i| epipolar_distance(f, p1[i], p2[i]) <= cfg.epipolar_threshold).count();
    let mut best = 0;
    let (mut s1, mut s2) = (Vec::with_capacity(SAMPLE), Vec::with_capacity(SAMPLE));
    for _ in 0..cfg.ransac_iterations {
        let idx = rand::seq::index::sample(&mut rng, n, SAMPLE);
        s1.clear();
        s2.clear();
        for i in idx.iter() {
            s1.push(p1[i]);
            s2.push(p2[i]);
        }
        if let Some(f) = fundamental_from_points(&s1, &s2) {
            best = best.max(count(&f));
            if best == n {
                break;
            }
        }
    }
    best
}

/// Putative matching followed by fundamental-matrix RANSAC.
pub fn match_features(a: &FeatureSet, b: &FeatureSet, cfg: &MatchConfig) -> Result<MatchResult> {
    let matches = putative_matches(a, b, cfg)?;
    let putative = matches.len();
    if a.len() < SAMPLE || b.len() < SAMPLE || putative < SAMPLE {
        return Ok(MatchResult { putative, inliers: 0, success: false });
    }
    let pt = |fs: &FeatureSet, i: usize| {
        let k = &fs.features()[i].keypoint;
        [k.x as f64, k.y as f64]
    };
    let p1: Vec<[f64; 2]> = matches.iter().map(|&(i, _)| pt(a, i)).collect();
    let p2: Vec<[f64; 2]> = matches.iter().map(|&(_, j)| pt(b, j)).collect();
    let inliers = ransac_inliers(&p1, &p2, cfg);
    Ok(MatchResult { putative, inliers, success: inliers >= cfg.min_inliers })
}

/// Fraction of successful results.
pub fn matching_recall(results: &[MatchResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(invalid!("matching recall needs at least one pair"));
    }
    Ok(results.iter().filter(|r| r.success).count() as f64 / results.len() as f64)
}

/// Matches every pair and reports the fraction that succeed.
pub fn matching_recall_pairs(pairs: &[(FeatureSet, FeatureSet)], cfg: &MatchConfig) -> Result<f64> {
    let results = pairs.iter().map(|(a, b)| match_features(a, b, cfg)).collect::<Result<Vec<_>>>()?;
    matching_recall(&results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, Keypoint};
    use rand::Rng;

    fn random_set(method: Method, n: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats = (0..n)
            .map(|i| Feature {
                keypoint: Keypoint::new(rng.random_range(0.0..128.0), rng.random_range(0.0..128.0), 1.0 / (i + 1) as f32, 2.0),
                descriptor: (0..method.channels())
                    .map(|_| if method == Method::Binary { rng.random_range(0..=255u8) as f32 / 255.0 } else { rng.random_range(0.0..1.0) })
                    .collect(),
            })
            .collect();
        FeatureSet::new(method, 128, 128, feats).unwrap()
    }

    #[test]
    fn self_match_is_all_inliers() {
        for m in [Method::Sift, Method::Binary] {
            let a = random_set(m, 60, 1);
            let r = match_features(&a, &a, &MatchConfig::default()).unwrap();
            assert_eq!(r.putative, 60);
            assert_eq!(r.inliers, r.putative);
            assert!(r.success);
        }
    }

    #[test]
    fn unrelated_sets_fail() {
        let a = random_set(Method::Sift, 200, 2);
        let b = random_set(Method::Sift, 200, 3);
        let r = match_features(&a, &b, &MatchConfig::default()).unwrap();
        assert!(!r.success, "{r:?}");
    }

    #[test]
    fn eight_point_recovers_known_geometry() {
        // Pure translation along x: F = [t]x with t = (1, 0, 0).
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p1: Vec<[f64; 2]> = (0..12).map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
        let p2: Vec<[f64; 2]> = p1.iter().map(|p| [p[0] + rng.random_range(1.0..20.0), p[1]]).collect();
        let f = fundamental_from_points(&p1, &p2).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!(epipolar_distance(&f, *a, *b) < 1e-6);
        }
        assert!(epipolar_distance(&f, [10.0, 10.0], [30.0, 25.0]) > 1.0);
    }

    #[test]
    fn too_few_keypoints() {
        let a = random_set(Method::Sift, 5, 1);
        let r = match_features(&a, &a, &MatchConfig::default()).unwrap();
        assert_eq!((r.inliers, r.success), (0, false));
        assert!(matches!(match_features(&a, &random_set(Method::Binary, 5, 1), &MatchConfig::default()), Err(_)));
    }

    #[test]
    fn recall_ratio() {
        let ok = MatchResult { putative: 30, inliers: 25, success: true };
        let bad = MatchResult { putative: 3, inliers: 0, success: false };
        assert_eq!(matching_recall(&[ok, ok, ok, bad]).unwrap(), 0.75);
        assert!(matching_recall(&[]).is_err());
    }
}
