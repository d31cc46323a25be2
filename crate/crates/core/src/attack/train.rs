//! Training configuration, sample sources and the training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, EpochLosses};
use super::discriminator::{Discriminator, DiscriminatorSpec};
use super::generator::{Generator, GeneratorSpec};
use super::losses::{
    adversarial_losses, discriminator_adv_grads, generator_adv_grad, mae_with_grad, perceptual_with_grad,
};
use super::perceptual::PerceptualTaps;
use crate::error::{Error, Result};
use crate::features::{assemble_sparse_map, extract_features, DetectorKind, FeatureSet, Method};
use crate::image::Image;
use crate::nn::{zero_grads, Adam, AdamConfig, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the perceptual term.
    pub alpha: f64,
    /// Weight of the adversarial term; zero disables the discriminator.
    pub beta: f64,
    pub epochs: usize,
    /// First 1-based epoch that trains the discriminator and uses its loss.
    pub adversarial_start: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub crop_size: usize,
    pub batch_size: usize,
    /// Batches per epoch; by default one pass over the samples.
    pub steps_per_epoch: Option<usize>,
    pub seed: u64,
    /// Emit a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    pub generator_widths: [usize; 5],
    pub discriminator_widths: [usize; 7],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.1,
            epochs: 400,
            adversarial_start: 251,
            generator_lr: 1e-3,
            discriminator_lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            crop_size: 256,
            batch_size: 1,
            steps_per_epoch: None,
            seed: 0,
            checkpoint_every: 0,
            generator_widths: GeneratorSpec::new(1).widths,
            discriminator_widths: DiscriminatorSpec::default().widths,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha.is_finite() && self.alpha >= 0.0 && self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("loss weights must be finite and non-negative (alpha {}, beta {})", self.alpha, self.beta));
        }
        if self.epochs == 0 || self.adversarial_start == 0 || self.adversarial_start > self.epochs {
            return bad(format!("need 1 <= adversarial_start ({}) <= epochs ({})", self.adversarial_start, self.epochs));
        }
        if self.crop_size == 0 || self.crop_size % DiscriminatorSpec::STRIDE != 0 {
            return bad(format!("crop_size {} must be a positive multiple of {}", self.crop_size, DiscriminatorSpec::STRIDE));
        }
        if self.batch_size == 0 || self.steps_per_epoch == Some(0) {
            return bad("batch_size and steps_per_epoch must be positive".into());
        }
        let lrs = [self.generator_lr, self.discriminator_lr, self.adam_eps];
        if lrs.iter().any(|v| !v.is_finite() || *v <= 0.0) || !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("optimizer settings out of range".into());
        }
        if self.generator_widths.contains(&0) || self.discriminator_widths.contains(&0) {
            return bad("network widths must be positive".into());
        }
        Ok(())
    }

    pub(crate) fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }

    /// Whether `epoch` (1-based) trains the discriminator and adds its loss.
    pub fn adversarial_active(&self, epoch: usize) -> bool {
        self.beta > 0.0 && epoch >= self.adversarial_start
    }
}

/// Supplies `(crop, features of that crop)` training pairs.
pub trait SampleSource {
    fn method(&self) -> Method;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, index: usize, crop: usize, rng: &mut ChaCha8Rng) -> Result<(Image, FeatureSet)>;
}

/// Pre-extracted pairs used whole; every image must be `crop x crop`.
pub struct FixedSamples {
    samples: Vec<(Image, FeatureSet)>,
}

impl FixedSamples {
    pub fn new(samples: Vec<(Image, FeatureSet)>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Dataset("training set is empty".into()));
        };
        let method = first.1.method();
        for (i, (img, fs)) in samples.iter().enumerate() {
            if fs.method() != method {
                return Err(Error::Dataset(format!("sample {i} uses {} descriptors but sample 0 uses {method}", fs.method())));
            }
            if (img.height(), img.width()) != (fs.height(), fs.width()) {
                return Err(Error::Dataset(format!("sample {i}: features do not belong to a same-sized image")));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(Image, FeatureSet)] {
        &self.samples
    }
}

impl SampleSource for FixedSamples {
    fn method(&self) -> Method {
        self.samples[0].1.method()
    }

    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(&self, index: usize, crop: usize, _rng: &mut ChaCha8Rng) -> Result<(Image, FeatureSet)> {
        let (img, fs) = &self.samples[index];
        if img.height() != crop || img.width() != crop {
            return Err(Error::Dataset(format!("sample {index} is {}x{}, expected {crop}x{crop}", img.height(), img.width())));
        }
        Ok((img.clone(), fs.clone()))
    }
}

/// Random crops of full images with features extracted on each crop.
pub struct CropSource {
    pub images: Vec<Image>,
    pub method: Method,
    pub detector: DetectorKind,
    pub max_keypoints: usize,
}

impl SampleSource for CropSource {
    fn method(&self) -> Method {
        self.method
    }

    fn len(&self) -> usize {
        self.images.len()
    }

    fn sample(&self, index: usize, crop: usize, rng: &mut ChaCha8Rng) -> Result<(Image, FeatureSet)> {
        let img = &self.images[index];
        if img.height() < crop || img.width() < crop {
            return Err(Error::Dataset(format!("image {index} ({}x{}) is smaller than the {crop} crop", img.height(), img.width())));
        }
        let top = rng.random_range(0..=img.height() - crop);
        let left = rng.random_range(0..=img.width() - crop);
        let c = img.crop(top, left, crop, crop)?;
        let fs = extract_features(&c, self.method, self.detector, self.max_keypoints)?;
        Ok((c, fs))
    }
}

/// Independent stream for each epoch so resumed runs draw the same batches.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Owns the training state and the frozen perceptual backbone.
pub struct Trainer {
    state: Checkpoint,
    backbone: PerceptualTaps<f32>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, method: Method, detector: DetectorKind, backbone: PerceptualTaps<f32>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = epoch_rng(cfg.seed, 0);
        let generator = Generator::new(GeneratorSpec::new(method.channels()).with_widths(cfg.generator_widths), &mut rng)?;
        let discriminator = Discriminator::new(DiscriminatorSpec { widths: cfg.discriminator_widths }, &mut rng)?;
        let state = Checkpoint {
            method,
            detector,
            epoch: 0,
            generator_opt: Adam::new(cfg.adam(cfg.generator_lr)),
            discriminator_opt: Adam::new(cfg.adam(cfg.discriminator_lr)),
            config: cfg,
            generator,
            discriminator,
            history: Vec::new(),
            backbone_digest: backbone.digest(),
        };
        Ok(Self { state, backbone })
    }

    /// Continues from a saved state; the backbone must be the one it was trained with.
    pub fn resume(state: Checkpoint, backbone: PerceptualTaps<f32>) -> Result<Self> {
        state.config.validate()?;
        if state.backbone_digest != backbone.digest() {
            return Err(Error::Config("perceptual backbone differs from the one used for this checkpoint".into()));
        }
        Ok(Self { state, backbone })
    }

    pub fn state(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_state(self) -> Checkpoint {
        self.state
    }

    pub fn backbone(&self) -> &PerceptualTaps<f32> {
        &self.backbone
    }

    /// Runs one epoch and appends its mean losses to the history.
    pub fn run_epoch(&mut self, source: &dyn SampleSource) -> Result<EpochLosses> {
        if source.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        if source.method() != self.state.method {
            return Err(Error::Dataset(format!(
                "samples use {} descriptors but the model is trained for {}",
                source.method(),
                self.state.method
            )));
        }
        let cfg = self.state.config.clone();
        let epoch = self.state.epoch + 1;
        let adversarial = cfg.adversarial_active(epoch);
        let mut rng = epoch_rng(cfg.seed, epoch);
        let batches_per_pass = source.len().div_ceil(cfg.batch_size);
        let steps = cfg.steps_per_epoch.unwrap_or(batches_per_pass);
        let mut order: Vec<usize> = Vec::new();
        let mut sums = [0.0f64; 4];
        for _ in 0..steps {
            let mut idx = Vec::with_capacity(cfg.batch_size);
            while idx.len() < cfg.batch_size.min(source.len()) {
                if order.is_empty() {
                    order = (0..source.len()).collect();
                    order.shuffle(&mut rng);
                }
                idx.push(order.pop().expect("refilled"));
            }
            let (mut maps, mut targets) = (Vec::new(), Vec::new());
            for &i in &idx {
                let (img, fs) = source.sample(i, cfg.crop_size, &mut rng)?;
                maps.push(assemble_sparse_map(&fs, img.height(), img.width())?.to_tensor::<f32>());
                targets.push(img.to_tensor::<f32>());
            }
            let losses = self.step(&Tensor::stack(&maps), &Tensor::stack(&targets), adversarial)?;
            for (s, l) in sums.iter_mut().zip(losses) {
                *s += l;
            }
        }
        let n = steps as f64;
        let rec = EpochLosses {
            epoch,
            l_mae: sums[0] / n,
            l_perc: sums[1] / n,
            l_adv_gen: adversarial.then_some(sums[2] / n),
            l_disc: adversarial.then_some(sums[3] / n),
        };
        self.state.history.push(rec.clone());
        self.state.epoch = epoch;
        Ok(rec)
    }

    /// One optimizer step; returns `[mae, perc, adv_gen, disc]`.
    fn step(&mut self, x: &Tensor<f32>, y: &Tensor<f32>, adversarial: bool) -> Result<[f64; 4]> {
        let (alpha, beta) = (self.state.config.alpha, self.state.config.beta);
        let st = &mut self.state;
        let tape = st.generator.forward_train(x)?;
        let out = tape.output().clone();
        let (mae, mut grad) = mae_with_grad(&out, y)?;
        let mut perc = 0.0;
        if alpha > 0.0 {
            let target_taps = self.backbone.taps(y)?;
            let (p, g) = perceptual_with_grad(&out, &target_taps, &self.backbone)?;
            perc = p;
            let a = alpha as f32;
            grad.data_mut().iter_mut().zip(g.data()).for_each(|(d, v)| *d += a * v);
        }
        let (mut adv_gen, mut disc) = (0.0, 0.0);
        if adversarial {
            let real = st.discriminator.forward_train(y)?;
            let fake = st.discriminator.forward_train(&out)?;
            let to64 = |t: &Tensor<f32>| t.data().iter().map(|&v| v as f64).collect::<Vec<_>>();
            disc = adversarial_losses(&to64(real.scores()), &to64(fake.scores())).discriminator;
            let (dr, df) = discriminator_adv_grads(real.scores(), fake.scores());
            zero_grads(&mut st.discriminator);
            st.discriminator.backward(&real, &dr, true);
            st.discriminator.backward(&fake, &df, true);
            st.discriminator_opt.step(&mut st.discriminator);

            let fake = st.discriminator.forward_train(&out)?;
            adv_gen = adversarial_losses(&[], &to64(fake.scores())).generator;
            let d_scores = generator_adv_grad(fake.scores());
            let d_img = st.discriminator.backward(&fake, &d_scores, false);
            let b = beta as f32;
            grad.data_mut().iter_mut().zip(d_img.data()).for_each(|(d, v)| *d += b * v);
        }
        zero_grads(&mut st.generator);
        st.generator.backward(&tape, &grad);
        st.generator_opt.step(&mut st.generator);
        Ok([mae, perc, adv_gen, disc])
    }

    /// Trains up to `cfg.epochs`, calling `on_checkpoint` at the configured
    /// cadence and after the final epoch.
    pub fn train(
        &mut self,
        source: &dyn SampleSource,
        mut on_epoch: impl FnMut(&EpochLosses),
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
    ) -> Result<()> {
        let (epochs, every) = (self.state.config.epochs, self.state.config.checkpoint_every);
        while self.state.epoch < epochs {
            let rec = self.run_epoch(source)?;
            on_epoch(&rec);
            let e = self.state.epoch;
            if e == epochs || (every > 0 && e % every == 0) {
                on_checkpoint(&self.state)?;
            }
        }
        Ok(())
    }
}

/// Trains a model from scratch with a seeded backbone and returns the final state.
pub fn train_attack(source: &dyn SampleSource, cfg: &TrainConfig, detector: DetectorKind) -> Result<Checkpoint> {
    let mut t = Trainer::new(cfg.clone(), source.method(), detector, PerceptualTaps::seeded(cfg.seed))?;
    t.train(source, |_| {}, |_| Ok(()))?;
    Ok(t.into_state())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::synthetic_scene;
    use crate::nn::TensorArchive;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            adversarial_start: 2,
            crop_size: 128,
            steps_per_epoch: Some(2),
            seed: 9,
            generator_widths: [4, 4, 8, 8, 8],
            discriminator_widths: [2; 7],
            ..TrainConfig::default()
        }
    }

    fn source(method: Method) -> FixedSamples {
        let samples = (0..2)
            .map(|i| {
                let img = synthetic_scene(i, 128, 128).unwrap();
                let fs = extract_features(&img, method, DetectorKind::Harris, 100).unwrap();
                (img, fs)
            })
            .collect();
        FixedSamples::new(samples).unwrap()
    }

    fn module_tensors(ckpt: &Checkpoint, prefix: &str) -> Vec<f32> {
        let ar = ckpt.to_archive();
        ar.tensors.iter().filter(|(k, _)| k.starts_with(prefix)).flat_map(|(_, t)| t.data.clone()).collect()
    }

    fn bytes(ar: &TensorArchive) -> Vec<u8> {
        let mut out = Vec::new();
        ar.write_to(&mut out).unwrap();
        out
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { alpha: -1.0, ..TrainConfig::default() },
            TrainConfig { crop_size: 100, ..TrainConfig::default() },
            TrainConfig { adversarial_start: 401, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::Config(_))));
        }
        let zero_beta = TrainConfig { beta: 0.0, ..TrainConfig::default() };
        assert!(!zero_beta.adversarial_active(400));
        assert!(!TrainConfig::default().adversarial_active(250));
        assert!(TrainConfig::default().adversarial_active(251));
    }

    #[test]
    fn mixed_methods_rejected() {
        let img = synthetic_scene(0, 128, 128).unwrap();
        let a = extract_features(&img, Method::Sift, DetectorKind::Harris, 50).unwrap();
        let b = extract_features(&img, Method::Binary, DetectorKind::Harris, 50).unwrap();
        let err = FixedSamples::new(vec![(img.clone(), a), (img, b)]).err().unwrap();
        assert!(matches!(err, Error::Dataset(_)));
    }

    #[test]
    fn discriminator_starts_at_configured_epoch() {
        let src = source(Method::Binary);
        let mut t = Trainer::new(tiny_config(), Method::Binary, DetectorKind::Harris, PerceptualTaps::seeded(1)).unwrap();
        let d0 = module_tensors(t.state(), "discriminator.");
        let g0 = module_tensors(t.state(), "generator.");
        let digest = t.backbone().digest();
        let e1 = t.run_epoch(&src).unwrap();
        assert_eq!((e1.l_adv_gen, e1.l_disc), (None, None));
        assert_eq!(module_tensors(t.state(), "discriminator."), d0);
        assert_ne!(module_tensors(t.state(), "generator."), g0);
        let e2 = t.run_epoch(&src).unwrap();
        assert!(e2.l_adv_gen.is_some() && e2.l_disc.is_some());
        assert_ne!(module_tensors(t.state(), "discriminator."), d0);
        assert_eq!(t.backbone().digest(), digest);
        assert_eq!(t.state().backbone_digest, digest);
    }

    #[test]
    fn checkpoint_round_trip_and_resume() {
        let src = source(Method::Sift);
        let cfg = tiny_config();
        let mut full = Trainer::new(cfg.clone(), Method::Sift, DetectorKind::Harris, PerceptualTaps::seeded(1)).unwrap();
        full.train(&src, |_| {}, |_| Ok(())).unwrap();

        let mut part = Trainer::new(cfg, Method::Sift, DetectorKind::Harris, PerceptualTaps::seeded(1)).unwrap();
        part.run_epoch(&src).unwrap();
        part.run_epoch(&src).unwrap();
        let saved = bytes(&part.state().to_archive());
        let loaded = Checkpoint::from_archive(&TensorArchive::read_from(&mut saved.as_slice()).unwrap()).unwrap();
        assert_eq!(bytes(&loaded.to_archive()), saved);
        assert_eq!(loaded.history, part.state().history);

        let mut resumed = Trainer::resume(loaded, PerceptualTaps::seeded(1)).unwrap();
        resumed.train(&src, |_| {}, |_| Ok(())).unwrap();
        let (a, b) = (module_tensors(full.state(), "generator."), module_tensors(resumed.state(), "generator."));
        assert_eq!(a.len(), b.len());
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff <= 1e-6, "resumed weights differ by {diff}");
        assert_eq!(full.state().history.len(), 3);

        let other = PerceptualTaps::seeded(2);
        assert!(matches!(Trainer::resume(full.into_state(), other), Err(Error::Config(_))));
    }

    #[test]
    fn reconstruction_checks_method() {
        let t = Trainer::new(tiny_config(), Method::Sift, DetectorKind::Harris, PerceptualTaps::seeded(1)).unwrap();
        let img = synthetic_scene(0, 100, 90).unwrap();
        let (recon, fs) = crate::attack::reconstruct(&img, Method::Sift, t.state(), 50, None).unwrap();
        assert_eq!((recon.height(), recon.width()), (100, 90));
        assert!(fs.len() <= 50);
        assert!(crate::attack::reconstruct(&img, Method::Binary, t.state(), 50, None).is_err());
    }
}
