pub mod attack;
pub mod evaluate;
pub mod extract;
pub mod mitigate;
pub mod report;
pub mod sweep;
pub mod train;

use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use featleak::attack::Checkpoint;
use featleak::detector::image_id;
use featleak::features::{extract_features, FeatureSet};
use featleak::mitigate::MitigationPlan;

use crate::config::ExperimentConfig;
use crate::dataset::{list_images, BoxSource};
use crate::error::{CliError, CliResult};

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

/// Appends a timestamped line to `<out>/run.log`; reports themselves carry no timestamps.
pub fn log_run(cfg: &ExperimentConfig, command: &str, detail: &str) -> CliResult<()> {
    std::fs::create_dir_all(&cfg.out)?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(cfg.out.join("run.log"))?;
    writeln!(f, "{secs} {command} config={} {detail}", cfg.digest())?;
    Ok(())
}

/// Loads the configured checkpoint and checks it fits the configured method and detector.
pub fn load_checkpoint(cfg: &ExperimentConfig) -> CliResult<Checkpoint> {
    let path = cfg.require("checkpoint", &cfg.checkpoint)?;
    let ckpt = Checkpoint::load(&path)?;
    if ckpt.method != cfg.method {
        return Err(CliError::Config(format!(
            "checkpoint {} was trained on {} descriptors but the method is {}",
            path.display(),
            ckpt.method,
            cfg.method
        )));
    }
    if ckpt.detector != cfg.detector {
        return Err(CliError::Config(format!(
            "checkpoint {} was trained with {} keypoints but the detector is {}",
            path.display(),
            ckpt.detector.tag(),
            cfg.detector.tag()
        )));
    }
    Ok(ckpt)
}

/// Features for every input: extracted from `images` when set, otherwise read from `features`.
pub fn input_features(cfg: &ExperimentConfig) -> CliResult<Vec<(String, FeatureSet)>> {
    if cfg.images.is_some() {
        let entries = list_images(&cfg.require("images", &cfg.images)?)?;
        return entries
            .iter()
            .map(|e| Ok((e.id.clone(), extract_features(&e.load()?, cfg.method, cfg.detector, cfg.max_keypoints)?)))
            .collect();
    }
    let dir = cfg.require("features", &cfg.features)?;
    let mut files: Vec<_> = std::fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "sfv"));
    files.sort();
    files
        .iter()
        .map(|p| {
            let fs = FeatureSet::load(p)?;
            if fs.method() != cfg.method {
                return Err(CliError::Config(format!("{} holds {} features, expected {}", p.display(), fs.method(), cfg.method)));
            }
            Ok((image_id(p), fs))
        })
        .collect()
}

/// Applies the configured mitigation, fetching boxes only when it needs them.
pub fn mitigate(cfg: &ExperimentConfig, plan: &MitigationPlan, boxes: Option<&BoxSource>, id: &str, fs: &FeatureSet) -> CliResult<FeatureSet> {
    if !plan.mitigation.needs_boxes() {
        return Ok(plan.apply(fs, &[]));
    }
    let source = boxes.ok_or_else(|| CliError::missing(format!("mitigation {} needs --boxes", plan.mitigation)))?;
    let b = source.boxes_for(id, fs.height(), fs.width(), cfg.min_confidence)?;
    Ok(plan.apply(fs, &b))
}

pub fn open_boxes(cfg: &ExperimentConfig) -> CliResult<Option<BoxSource>> {
    match &cfg.boxes {
        Some(_) => Ok(Some(BoxSource::open(&cfg.require("boxes", &cfg.boxes)?)?)),
        None => Ok(None),
    }
}
