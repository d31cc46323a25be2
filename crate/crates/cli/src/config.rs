//! Experiment configuration: JSON file plus command-line overrides.

use std::path::{Path, PathBuf};

use featleak::attack::TrainConfig;
use featleak::detector::{DetectorBackend, DEFAULT_MIN_CONFIDENCE};
use featleak::features::{DetectorKind, Method};
use featleak::metrics::{MatchConfig, DEFAULT_IOU_THRESHOLD};
use featleak::mitigate::{Mitigation, MitigationPlan, PipelineOrder};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a command needs. Unset paths are only required by the commands that use them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory of input images (png/jpg).
    pub images: Option<PathBuf>,
    /// Directory of SFV1 feature files.
    pub features: Option<PathBuf>,
    /// Trained model archive.
    pub checkpoint: Option<PathBuf>,
    /// Pretrained perceptual backbone archive; a seeded stand-in is used when absent.
    pub backbone: Option<PathBuf>,
    pub method: Method,
    pub detector: DetectorKind,
    pub max_keypoints: usize,
    /// `none`, `reduce:N`, `suppress` or `reduce+suppress:N`.
    pub mitigation: String,
    pub order: PipelineOrder,
    /// Extra pixels around each box when suppressing.
    pub margin: f64,
    /// Directory of `<id>.boxes.jsonl` sidecars, or one JSONL file whose lines carry an `image` id.
    pub boxes: Option<PathBuf>,
    /// Object detector run on reconstructions; defaults to sidecars in `boxes`.
    pub object_detector: Option<DetectorBackend>,
    pub min_confidence: f64,
    pub iou_threshold: f64,
    /// Pair list: one `a b` pair of image ids per line.
    pub pairs: Option<PathBuf>,
    /// Keypoint budgets for `sweep`.
    pub sweep: Vec<usize>,
    pub train: TrainConfig,
    pub matching: MatchConfig,
    pub out: PathBuf,
    /// Overrides the training and RANSAC seeds.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            images: None,
            features: None,
            checkpoint: None,
            backbone: None,
            method: Method::Sift,
            detector: DetectorKind::Harris,
            max_keypoints: 1000,
            mitigation: "none".into(),
            order: PipelineOrder::default(),
            margin: 0.0,
            boxes: None,
            object_detector: None,
            min_confidence: DEFAULT_MIN_CONFIDENCE,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            pairs: None,
            sweep: vec![1000, 500, 200, 100],
            train: TrainConfig::default(),
            matching: MatchConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub detector: Option<DetectorKind>,
    pub max_keypoints: Option<usize>,
    pub mitigation: Option<String>,
    pub order: Option<PipelineOrder>,
    pub boxes: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub sweep: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    /// Applies overrides and propagates the seed.
    pub fn resolve(mut self, o: Overrides) -> Result<Self, CliError> {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { self.$f = v; })* };
        }
        set!(method, detector, max_keypoints, mitigation, order, seed, out, sweep);
        macro_rules! set_opt {
            ($($f:ident),*) => { $(if let Some(v) = o.$f { self.$f = Some(v); })* };
        }
        set_opt!(boxes, pairs, images, features, checkpoint);
        self.train.seed = self.seed;
        self.matching.seed = self.seed;
        self.plan()?;
        self.train.validate()?;
        if !(0.0..=1.0).contains(&self.min_confidence) || !(0.0..=1.0).contains(&self.iou_threshold) {
            return Err(CliError::Config("min_confidence and iou_threshold must lie in [0, 1]".into()));
        }
        if !self.margin.is_finite() || self.margin < 0.0 {
            return Err(CliError::Config(format!("margin {} must be non-negative", self.margin)));
        }
        Ok(self)
    }

    pub fn plan(&self) -> Result<MitigationPlan, CliError> {
        let mitigation: Mitigation = self.mitigation.parse()?;
        Ok(MitigationPlan { mitigation, order: self.order, margin: self.margin })
    }

    /// Existing path stored in `field`, or a missing-input error naming it.
    pub fn require(&self, field: &str, value: &Option<PathBuf>) -> Result<PathBuf, CliError> {
        match value {
            None => Err(CliError::missing(format!("`{field}` is not set (config file or command-line flag)"))),
            Some(p) if !p.exists() => Err(CliError::missing(format!("{field} path {} does not exist", p.display()))),
            Some(p) => Ok(p.clone()),
        }
    }

    pub fn digest(&self) -> String {
        featleak::metrics::config_digest(&self.to_value())
    }

    /// Resolved settings as echoed in reports. The output directory is left
    /// out so reruns into different directories produce identical reports.
    pub fn to_value(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("out");
        }
        v
    }

    /// Backend used to find objects; sidecars from `boxes` unless configured.
    pub fn object_backend(&self) -> Option<DetectorBackend> {
        if let Some(b) = &self.object_detector {
            return Some(b.clone());
        }
        self.boxes.as_ref().filter(|p| p.is_dir()).map(|p| DetectorBackend::Stub { sidecar_dir: p.clone() })
    }
}
