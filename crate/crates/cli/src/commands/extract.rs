use serde::Serialize;

use featleak::features::extract_features;

use super::{log_run, write_file};
use crate::config::ExperimentConfig;
use crate::dataset::list_images;
use crate::error::CliResult;

#[derive(Serialize)]
struct Manifest {
    method: String,
    channels: usize,
    detector: String,
    max_keypoints: usize,
    config_digest: String,
    images: Vec<Entry>,
}

#[derive(Serialize)]
struct Entry {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    keypoints: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let images = list_images(&cfg.require("images", &cfg.images)?)?;
    let dir = cfg.out.join("features");
    std::fs::create_dir_all(&dir)?;
    let mut entries = Vec::with_capacity(images.len());
    for img in &images {
        let file = format!("{}.sfv", img.id);
        let result = img.load().and_then(|im| Ok(extract_features(&im, cfg.method, cfg.detector, cfg.max_keypoints)?));
        let entry = match result.and_then(|fs| {
            fs.save(dir.join(&file))?;
            Ok(fs.len())
        }) {
            Ok(n) => Entry { id: img.id.clone(), file: Some(file), keypoints: Some(n), error: None },
            Err(e) => {
                eprintln!("warning: {}: {e}", img.path.display());
                Entry { id: img.id.clone(), file: None, keypoints: None, error: Some(e.to_string()) }
            }
        };
        entries.push(entry);
    }
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    let manifest = Manifest {
        method: cfg.method.tag().into(),
        channels: cfg.method.channels(),
        detector: cfg.detector.tag().into(),
        max_keypoints: cfg.max_keypoints,
        config_digest: cfg.digest(),
        images: entries,
    };
    write_file(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("extracted {} of {} images into {}", images.len() - failed, images.len(), dir.display());
    log_run(cfg, "extract", &format!("images={} failed={failed}", images.len()))
}
