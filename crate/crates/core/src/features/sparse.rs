use std::collections::BTreeSet;

use super::{FeatureSet, Keypoint, Method};
use crate::error::{invalid, Result};
use crate::nn::{Scalar, Tensor};

/// `H x W x C` grid that is zero except at keypoint cells, stored channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFeatureMap {
    method: Method,
    height: usize,
    width: usize,
    grid: Vec<f32>,
    occupancy: BTreeSet<(usize, usize)>,
}

/// Cell `(row, col)` a keypoint lands in: rounded and clamped.
pub fn cell_of(kp: &Keypoint, height: usize, width: usize) -> (usize, usize) {
    let clamp = |v: f32, n: usize| ((v as f64).round().max(0.0) as usize).min(n - 1);
    (clamp(kp.y, height), clamp(kp.x, width))
}

/// Places each descriptor at its keypoint's cell. When several keypoints share
/// a cell the highest response wins, and among equal responses the one listed
/// first.
pub fn assemble_sparse_map(features: &FeatureSet, height: usize, width: usize) -> Result<SparseFeatureMap> {
    if height != features.height() || width != features.width() {
        return Err(invalid!(
            "map size {height}x{width} does not match the {}x{} source image",
            features.height(),
            features.width()
        ));
    }
    let c = features.channels();
    let mut map = SparseFeatureMap::zeros(features.method(), height, width);
    let mut best = vec![f32::NEG_INFINITY; height * width];
    for f in features.features() {
        let (r, col) = cell_of(&f.keypoint, height, width);
        let i = r * width + col;
        if f.keypoint.response > best[i] {
            best[i] = f.keypoint.response;
            map.grid[i * c..(i + 1) * c].copy_from_slice(&f.descriptor);
            map.occupancy.insert((r, col));
        }
    }
    Ok(map)
}

impl SparseFeatureMap {
    pub fn zeros(method: Method, height: usize, width: usize) -> Self {
        Self {
            method,
            height,
            width,
            grid: vec![0.0; height * width * method.channels()],
            occupancy: BTreeSet::new(),
        }
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.method.channels()
    }

    /// Channel-last values, row-major over cells.
    pub fn grid(&self) -> &[f32] {
        &self.grid
    }

    pub fn occupancy(&self) -> &BTreeSet<(usize, usize)> {
        &self.occupancy
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let c = self.channels();
        let i = row * self.width + col;
        &self.grid[i * c..(i + 1) * c]
    }

    /// `1 x C x H x W` network input.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (h, w, c) = (self.height, self.width, self.channels());
        let mut t = Tensor::zeros([1, c, h, w]);
        let data = t.data_mut();
        for &(r, col) in &self.occupancy {
            for (ch, &v) in self.cell(r, col).iter().enumerate() {
                data[(ch * h + r) * w + col] = T::from_f64(v as f64);
            }
        }
        t
    }
}
