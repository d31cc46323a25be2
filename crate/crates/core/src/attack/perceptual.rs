//! Frozen VGG16-topology feature extractor used by the perceptual loss.
//!
//! Taps are the outputs of the first three convolutional blocks (after each
//! block's max-pool), giving `H/2 x W/2 x 64`, `H/4 x W/4 x 128` and
//! `H/8 x W/8 x 256` activations. Weights come from a tensor archive using
//! torchvision's `features.<index>.{weight,bias}` names, or from a seeded
//! He-normal initialization when no pretrained weights are available.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::nn::ops::{max_pool2, max_pool2_backward, relu, relu_backward};
use crate::nn::{Conv2d, Scalar, Tensor, TensorArchive};

const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// `(in, out, torchvision layer index)` for the convolutions of blocks 1-3.
const LAYERS: [(usize, usize, usize); 7] =
    [(3, 64, 0), (64, 64, 2), (64, 128, 5), (128, 128, 7), (128, 256, 10), (256, 256, 12), (256, 256, 14)];
/// Number of convolutions in each tapped block.
const BLOCKS: [usize; 3] = [2, 2, 3];
/// Channel count of each tap.
pub const TAP_CHANNELS: [usize; 3] = [64, 128, 256];

/// Where the backbone weights came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackboneSource {
    Pretrained(String),
    Seeded(u64),
}

#[derive(Clone, Debug)]
pub struct PerceptualTaps<T> {
    convs: Vec<Conv2d<T>>,
    source: BackboneSource,
}

/// Activations kept for backpropagation to the input image.
pub struct TapTape<T> {
    conv_inputs: Vec<Tensor<T>>,
    relu_outputs: Vec<Tensor<T>>,
    pool_args: Vec<Vec<u32>>,
    taps: Vec<Tensor<T>>,
}

impl<T> TapTape<T> {
    pub fn taps(&self) -> &[Tensor<T>] {
        &self.taps
    }
}

impl<T: Scalar> PerceptualTaps<T> {
    /// Deterministic random backbone.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let convs = LAYERS.iter().map(|&(i, o, _)| Conv2d::new_he(i, o, 3, 1, 1, &mut rng)).collect();
        Self { convs, source: BackboneSource::Seeded(seed) }
    }

    pub fn from_archive(archive: &TensorArchive, label: &str) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut convs = Vec::with_capacity(LAYERS.len());
        for &(cin, cout, idx) in &LAYERS {
            let mut conv = Conv2d::new(cin, cout, 3, 1, 1, &mut rng);
            let w = archive.get(&format!("features.{idx}.weight"))?;
            let b = archive.get(&format!("features.{idx}.bias"))?;
            if w.shape != [cout, cin, 3, 3] || b.shape != [cout] {
                return Err(Error::Format(format!("backbone layer {idx} has unexpected shape {:?}", w.shape)));
            }
            conv.weight.value = w.data.iter().map(|&v| T::from_f64(v as f64)).collect();
            conv.bias.value = b.data.iter().map(|&v| T::from_f64(v as f64)).collect();
            convs.push(conv);
        }
        Ok(Self { convs, source: BackboneSource::Pretrained(label.to_string()) })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let archive = TensorArchive::load(path.as_ref())?;
        Self::from_archive(&archive, &path.as_ref().display().to_string())
    }

    pub fn source(&self) -> &BackboneSource {
        &self.source
    }

    /// SHA-256 over all weights, for checking that the backbone stays frozen.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.convs {
            for v in c.weight.value.iter().chain(&c.bias.value) {
                h.update(v.as_f64().to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_input(x: &Tensor<T>) -> Result<()> {
        if x.channels() != 3 {
            return Err(invalid!("perceptual backbone expects 3 channels, got {}", x.channels()));
        }
        if x.height() < 8 || x.width() < 8 || x.height() % 8 != 0 || x.width() % 8 != 0 {
            return Err(invalid!("perceptual backbone input {}x{} is not a positive multiple of 8", x.height(), x.width()));
        }
        Ok(())
    }

    fn normalize(x: &Tensor<T>) -> Tensor<T> {
        let mut out = x.clone();
        let plane = x.plane();
        for n in 0..x.batch() {
            for (c, ch) in out.sample_mut(n).chunks_mut(plane).enumerate() {
                let (m, s) = (T::from_f64(IMAGENET_MEAN[c]), T::from_f64(1.0 / IMAGENET_STD[c]));
                ch.iter_mut().for_each(|v| *v = (*v - m) * s);
            }
        }
        out
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<TapTape<T>> {
        Self::check_input(x)?;
        let mut t = Self::normalize(x);
        let mut tape = TapTape { conv_inputs: Vec::new(), relu_outputs: Vec::new(), pool_args: Vec::new(), taps: Vec::new() };
        let mut layer = 0;
        for &n in &BLOCKS {
            for _ in 0..n {
                let r = relu(&self.convs[layer].forward(&t));
                tape.conv_inputs.push(t);
                tape.relu_outputs.push(r.clone());
                t = r;
                layer += 1;
            }
            let (p, arg) = max_pool2(&t);
            tape.pool_args.push(arg);
            tape.taps.push(p.clone());
            t = p;
        }
        Ok(tape)
    }

    /// The three tap activations of `x`.
    pub fn taps(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.forward(x)?.taps)
    }

    /// Gradient with respect to the input image given gradients at each tap.
    pub fn backward(&self, tape: &TapTape<T>, d_taps: &[Tensor<T>]) -> Tensor<T> {
        assert_eq!(d_taps.len(), BLOCKS.len());
        let mut layer = LAYERS.len();
        let mut d: Option<Tensor<T>> = None;
        for b in (0..BLOCKS.len()).rev() {
            let mut dp = d_taps[b].clone();
            if let Some(g) = d.take() {
                dp.add_assign(&g);
            }
            let pooled_from = &tape.relu_outputs[layer - 1];
            let mut g = max_pool2_backward(pooled_from.shape(), &tape.pool_args[b], &dp);
            for _ in 0..BLOCKS[b] {
                layer -= 1;
                let dz = relu_backward(&tape.relu_outputs[layer], &g);
                g = self.convs[layer].input_grad(tape.conv_inputs[layer].shape(), &dz);
            }
            d = Some(g);
        }
        let mut g = d.expect("at least one block");
        let plane = g.plane();
        for n in 0..g.batch() {
            for (c, ch) in g.sample_mut(n).chunks_mut(plane).enumerate() {
                let s = T::from_f64(1.0 / IMAGENET_STD[c]);
                ch.iter_mut().for_each(|v| *v = *v * s);
            }
        }
        g
    }
}
