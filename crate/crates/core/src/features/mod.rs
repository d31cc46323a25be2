//! Keypoint detection, descriptor extraction and sparse feature maps.

mod describe;
mod dog;
mod filters;
mod harris;
mod sfv;
mod sparse;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use describe::{
    extract_descriptors, extract_learned, PatchDescriptor, RandomProjection, BINARY_PAIRS, PATCH_SIDE, SUPPORT_FACTOR,
};
pub use dog::{detect_dog, DogConfig};
pub use harris::{detect_harris, HarrisConfig};
pub use sfv::{read_sfv, write_sfv};
pub use sparse::{assemble_sparse_map, cell_of, SparseFeatureMap};

/// Descriptor family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sift,
    Binary,
    Learned,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sift, Method::Binary, Method::Learned];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Sift => "sift",
            Method::Binary => "binary",
            Method::Learned => "learned",
        }
    }

    /// Descriptor length `C`.
    pub fn channels(self) -> usize {
        match self {
            Method::Sift | Method::Learned => 128,
            Method::Binary => 64,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown descriptor method `{s}` (expected sift, binary or learned)")))
    }
}

/// Which keypoint detector feeds the descriptors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Harris,
    Dog,
}

impl DetectorKind {
    pub fn tag(self) -> &'static str {
        match self {
            DetectorKind::Harris => "harris",
            DetectorKind::Dog => "dog",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harris" => Ok(DetectorKind::Harris),
            "dog" => Ok(DetectorKind::Dog),
            _ => Err(Error::Config(format!("unknown keypoint detector `{s}` (expected harris or dog)"))),
        }
    }
}

/// Interest point in image coordinates (`x` = column, `y` = row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub response: f32,
    /// Patch scale in pixels; descriptor support is `SUPPORT_FACTOR * scale` wide.
    pub scale: f32,
    /// Radians in `[0, 2pi)`.
    pub orientation: f32,
}

impl Keypoint {
    pub fn new(x: f32, y: f32, response: f32, scale: f32) -> Self {
        Self { x, y, response, scale, orientation: 0.0 }
    }

    fn check(&self, height: usize, width: usize) -> Result<()> {
        let ok = self.x.is_finite()
            && self.y.is_finite()
            && self.x >= 0.0
            && self.y >= 0.0
            && (self.x as f64) < width as f64
            && (self.y as f64) < height as f64
            && self.response >= 0.0
            && self.scale.is_finite()
            && self.scale > 0.0
            && (0.0..std::f32::consts::TAU).contains(&self.orientation);
        if ok {
            Ok(())
        } else {
            Err(invalid!("keypoint {self:?} is invalid for a {height}x{width} image"))
        }
    }
}

/// A keypoint with its canonicalized descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f32>,
}

/// Features of one image, sorted by descending response.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    method: Method,
    height: usize,
    width: usize,
    features: Vec<Feature>,
}

impl FeatureSet {
    /// Validates bounds and descriptor lengths, then stable-sorts by descending response.
    pub fn new(method: Method, height: usize, width: usize, mut features: Vec<Feature>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid!("feature set dimensions must be positive, got {height}x{width}"));
        }
        for f in &features {
            f.keypoint.check(height, width)?;
            if f.descriptor.len() != method.channels() {
                return Err(invalid!(
                    "{method} descriptor must have {} values, got {}",
                    method.channels(),
                    f.descriptor.len()
                ));
            }
            if f.descriptor.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(invalid!("descriptor values must lie in [0, 1]"));
            }
        }
        features.sort_by(|a, b| b.keypoint.response.total_cmp(&a.keypoint.response));
        Ok(Self { method, height, width, features })
    }

    pub fn empty(method: Method, height: usize, width: usize) -> Result<Self> {
        Self::new(method, height, width, Vec::new())
    }

    /// Keeps the features for which `keep` returns true, preserving order.
    pub fn filtered(&self, mut keep: impl FnMut(usize, &Feature) -> bool) -> Self {
        let features = self.features.iter().enumerate().filter(|(i, f)| keep(*i, f)).map(|(_, f)| f.clone()).collect();
        Self { features, ..*self }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn channels(&self) -> usize {
        self.method.channels()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn keypoints(&self) -> impl Iterator<Item = &Keypoint> {
        self.features.iter().map(|f| &f.keypoint)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Sorts detector candidates by descending response (stable) and truncates.
pub(crate) fn rank_and_truncate(mut kps: Vec<Keypoint>, max_keypoints: usize) -> Vec<Keypoint> {
    kps.sort_by(|a, b| b.response.total_cmp(&a.response));
    kps.truncate(max_keypoints);
    kps
}

/// Runs the chosen detector followed by descriptor extraction.
pub fn extract_features(
    image: &crate::Image,
    method: Method,
    detector: DetectorKind,
    max_keypoints: usize,
) -> Result<FeatureSet> {
    let kps = match detector {
        DetectorKind::Harris => detect_harris(image, max_keypoints, &HarrisConfig::default()),
        DetectorKind::Dog => detect_dog(image, max_keypoints, &DogConfig::default()),
    };
    extract_descriptors(image, &kps, method)
}
