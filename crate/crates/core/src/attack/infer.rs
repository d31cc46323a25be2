//! Inference entry points on images and sparse maps.

use super::checkpoint::Checkpoint;
use super::discriminator::Discriminator;
use super::generator::Generator;
use crate::error::{invalid, Result};
use crate::features::{assemble_sparse_map, extract_features, FeatureSet, Method, SparseFeatureMap};
use crate::image::Image;
use crate::mitigate::{BoundingBox, MitigationPlan};
use crate::nn::Tensor;

/// Reconstructs an image from a sparse map in evaluation mode.
pub fn generator_forward(generator: &Generator<f32>, map: &SparseFeatureMap) -> Result<Image> {
    if map.channels() != generator.spec().in_channels {
        return Err(invalid!(
            "feature map has {} channels but the generator expects {}",
            map.channels(),
            generator.spec().in_channels
        ));
    }
    Image::from_tensor(&generator.forward(&map.to_tensor::<f32>())?, 0)
}

/// Realness grid of shape `(H/128) x (W/128)` per output channel.
pub fn discriminator_forward(discriminator: &Discriminator<f32>, image: &Image) -> Result<Tensor<f32>> {
    discriminator.forward(&image.to_tensor::<f32>())
}

/// Mitigation applied before the features are shared.
pub struct MitigationInput<'a> {
    pub plan: &'a MitigationPlan,
    pub boxes: &'a [BoundingBox],
}

/// Detect, describe, optionally mitigate, assemble and invert. Returns the
/// reconstruction and the exact features the generator saw.
pub fn reconstruct(
    image: &Image,
    method: Method,
    ckpt: &Checkpoint,
    max_keypoints: usize,
    mitigation: Option<MitigationInput<'_>>,
) -> Result<(Image, FeatureSet)> {
    if method != ckpt.method {
        return Err(invalid!("checkpoint was trained on {} descriptors, not {method}", ckpt.method));
    }
    let fs = extract_features(image, method, ckpt.detector, max_keypoints)?;
    let fs = match mitigation {
        Some(m) => m.plan.apply(&fs, m.boxes),
        None => fs,
    };
    let recon = reconstruct_from_features(&fs, ckpt)?;
    Ok((recon, fs))
}

/// Inverts an already extracted feature set.
pub fn reconstruct_from_features(features: &FeatureSet, ckpt: &Checkpoint) -> Result<Image> {
    if features.method() != ckpt.method {
        return Err(invalid!("checkpoint was trained on {} descriptors, not {}", ckpt.method, features.method()));
    }
    let map = assemble_sparse_map(features, features.height(), features.width())?;
    generator_forward(&ckpt.generator, &map)
}
