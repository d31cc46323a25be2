//! Persistent training state.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::discriminator::{Discriminator, DiscriminatorSpec};
use super::generator::{Generator, GeneratorSpec};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::features::{DetectorKind, Method};
use crate::metrics::config_digest;
use crate::nn::{export_module, import_module, Adam, AdamConfig, TensorArchive};

const FORMAT: &str = "featleak-checkpoint";
const FORMAT_VERSION: u64 = 1;

/// Mean losses of one epoch; adversarial terms are absent before they start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub l_mae: f64,
    pub l_perc: f64,
    pub l_adv_gen: Option<f64>,
    pub l_disc: Option<f64>,
}

/// Everything needed to continue training or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub method: Method,
    pub detector: DetectorKind,
    /// Number of completed epochs.
    pub epoch: usize,
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub generator_opt: Adam<f32>,
    pub discriminator_opt: Adam<f32>,
    pub history: Vec<EpochLosses>,
    /// Digest of the perceptual backbone weights used in training.
    pub backbone_digest: String,
}

#[derive(Serialize, Deserialize)]
struct OptState {
    config: AdamConfig,
    step: u64,
    moments: usize,
}

fn export_adam(adam: &Adam<f32>, prefix: &str, ar: &mut TensorArchive) -> OptState {
    for (i, (m, v)) in adam.first_moment.iter().zip(&adam.second_moment).enumerate() {
        ar.insert(format!("{prefix}.m.{i}"), vec![m.len()], m.clone());
        ar.insert(format!("{prefix}.v.{i}"), vec![v.len()], v.clone());
    }
    OptState { config: adam.config, step: adam.step, moments: adam.first_moment.len() }
}

fn import_adam(state: OptState, prefix: &str, ar: &TensorArchive) -> Result<Adam<f32>> {
    let mut adam = Adam::new(state.config);
    adam.step = state.step;
    for i in 0..state.moments {
        adam.first_moment.push(ar.get(&format!("{prefix}.m.{i}"))?.data.clone());
        adam.second_moment.push(ar.get(&format!("{prefix}.v.{i}"))?.data.clone());
    }
    Ok(adam)
}

impl Checkpoint {
    pub fn channels(&self) -> usize {
        self.method.channels()
    }

    pub fn config_digest(&self) -> String {
        config_digest(&serde_json::to_value(&self.config).expect("config serializes"))
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut ar = TensorArchive::default();
        let mut g = self.generator.clone();
        let mut d = self.discriminator.clone();
        export_module(&mut g, "generator", &mut ar);
        export_module(&mut d, "discriminator", &mut ar);
        let gopt = export_adam(&self.generator_opt, "opt.generator", &mut ar);
        let dopt = export_adam(&self.discriminator_opt, "opt.discriminator", &mut ar);
        ar.manifest = json!({
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "method": self.method,
            "channels": self.channels(),
            "detector": self.detector,
            "epoch": self.epoch,
            "config": self.config,
            "config_digest": self.config_digest(),
            "backbone_digest": self.backbone_digest,
            "history": self.history,
            "generator_opt": gopt,
            "discriminator_opt": dopt,
        });
        ar
    }

    pub fn from_archive(ar: &TensorArchive) -> Result<Self> {
        let m = &ar.manifest;
        if m.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(Error::Format("archive is not a model checkpoint".into()));
        }
        let field = |k: &str| m.get(k).cloned().ok_or_else(|| Error::Format(format!("checkpoint manifest lacks `{k}`")));
        let method: Method = serde_json::from_value(field("method")?)?;
        let channels: usize = serde_json::from_value(field("channels")?)?;
        if channels != method.channels() {
            return Err(Error::Format(format!("checkpoint declares {channels} channels for {method}")));
        }
        let config: TrainConfig = serde_json::from_value(field("config")?)?;
        let digest: String = serde_json::from_value(field("config_digest")?)?;
        if digest != config_digest(&serde_json::to_value(&config)?) {
            return Err(Error::Format("checkpoint config digest does not match its config".into()));
        }
        // Initial values are overwritten by the stored tensors.
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut generator = Generator::new(GeneratorSpec::new(channels).with_widths(config.generator_widths), &mut rng)?;
        let mut discriminator = Discriminator::new(DiscriminatorSpec { widths: config.discriminator_widths }, &mut rng)?;
        import_module(&mut generator, "generator", ar)?;
        import_module(&mut discriminator, "discriminator", ar)?;
        Ok(Self {
            method,
            detector: serde_json::from_value(field("detector")?)?,
            epoch: serde_json::from_value(field("epoch")?)?,
            generator_opt: import_adam(serde_json::from_value(field("generator_opt")?)?, "opt.generator", ar)?,
            discriminator_opt: import_adam(serde_json::from_value(field("discriminator_opt")?)?, "opt.discriminator", ar)?,
            history: serde_json::from_value(field("history")?)?,
            backbone_digest: serde_json::from_value(field("backbone_digest")?)?,
            config,
            generator,
            discriminator,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_archive(&TensorArchive::load(path)?)
    }

    /// Loss history as CSV; missing adversarial terms are empty cells.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,l_mae,l_perc,l_adv_gen,l_disc\n");
        let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for h in &self.history {
            let _ = writeln!(s, "{},{},{},{},{}", h.epoch, h.l_mae, h.l_perc, o(h.l_adv_gen), o(h.l_disc));
        }
        s
    }
}
