use std::collections::BTreeMap;
use std::path::PathBuf;

use featleak::attack::reconstruct_from_features;
use featleak::features::{extract_features, FeatureSet};
use featleak::metrics::{match_features, ssim, ImageMetrics, MetricsReport, PairMetrics};
use featleak::mitigate::reduce_top_n;
use featleak::Image;

use super::report::ReportSet;
use super::{load_checkpoint, log_run};
use crate::config::ExperimentConfig;
use crate::dataset::{list_images, read_pairs};
use crate::error::{CliError, CliResult};

/// Loads and describes every image once.
pub fn load_inputs(cfg: &ExperimentConfig) -> CliResult<BTreeMap<String, (Image, FeatureSet, PathBuf)>> {
    let entries = list_images(&cfg.require("images", &cfg.images)?)?;
    let mut out = BTreeMap::new();
    for e in entries {
        let img = e.load()?;
        let fs = extract_features(&img, cfg.method, cfg.detector, cfg.max_keypoints)?;
        out.insert(e.id, (img, fs, e.path));
    }
    Ok(out)
}

/// Reconstruction quality and matching recall for each keypoint budget.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let ckpt = load_checkpoint(cfg)?;
    if cfg.sweep.is_empty() {
        return Err(CliError::Config("sweep list is empty".into()));
    }
    let pairs = match &cfg.pairs {
        Some(_) => read_pairs(&cfg.require("pairs", &cfg.pairs)?)?,
        None => Vec::new(),
    };
    let inputs = load_inputs(cfg)?;
    for (a, b) in &pairs {
        for id in [a, b] {
            if !inputs.contains_key(id) {
                return Err(CliError::missing(format!("pair list names `{id}`, which is not in the image directory")));
            }
        }
    }
    let mut runs = Vec::new();
    for &n in &cfg.sweep {
        let mut images = Vec::new();
        for (id, (img, fs, _)) in &inputs {
            let recon = reconstruct_from_features(&reduce_top_n(fs, n), &ckpt)?;
            images.push(ImageMetrics { id: id.clone(), ssim: Some(ssim(img, &recon)?), ..Default::default() });
        }
        let mut pair_rows = Vec::new();
        for (a, b) in &pairs {
            let result = match_features(&reduce_top_n(&inputs[a].1, n), &reduce_top_n(&inputs[b].1, n), &cfg.matching)?;
            pair_rows.push(PairMetrics { a: a.clone(), b: b.clone(), result });
        }
        let report = MetricsReport::new(format!("N={n}"), cfg.to_value(), images, pair_rows);
        let s = &report.summary;
        println!("N={n}: mean SSIM {:?}, matching recall {:?}", s.mean_ssim, s.matching_recall);
        runs.push(report);
    }
    let set = ReportSet { kind: "sweep".into(), config_digest: cfg.digest(), config: cfg.to_value(), runs, budgets: cfg.sweep.clone() };
    set.write(&cfg.out, "sweep")?;
    log_run(cfg, "sweep", &format!("budgets={:?}", cfg.sweep))
}
