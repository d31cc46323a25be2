use featleak::attack::{reconstruct_from_features, Checkpoint};
use featleak::detector::detect_objects;
use featleak::metrics::{match_features, object_recall_with, ssim, ImageMetrics, MetricsReport, PairMetrics};
use featleak::mitigate::{Mitigation, MitigationPlan};

use super::report::ReportSet;
use super::sweep::load_inputs;
use super::{load_checkpoint, log_run, mitigate, open_boxes};
use crate::config::ExperimentConfig;
use crate::dataset::read_pairs;
use crate::error::CliResult;

/// Runs without mitigation, with the configured one, and with suppression when boxes are given.
fn plans(cfg: &ExperimentConfig, have_boxes: bool) -> CliResult<Vec<MitigationPlan>> {
    let configured = cfg.plan()?;
    let mut out = vec![MitigationPlan::new(Mitigation::None)];
    let suppress = MitigationPlan { mitigation: Mitigation::Suppress, ..configured.clone() };
    if configured.mitigation != Mitigation::None && configured != suppress {
        out.push(configured);
    }
    if have_boxes {
        out.push(suppress);
    }
    Ok(out)
}

fn join_notes(notes: Vec<String>) -> Option<String> {
    (!notes.is_empty()).then(|| notes.join("; "))
}

/// Per-image and per-pair metrics for each mitigation; missing inputs leave gaps with a note.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let ckpt: Option<Checkpoint> = match &cfg.checkpoint {
        Some(_) => Some(load_checkpoint(cfg)?),
        None => None,
    };
    let boxes = open_boxes(cfg)?;
    let object_backend = cfg.object_backend();
    let pairs = match &cfg.pairs {
        Some(_) => read_pairs(&cfg.require("pairs", &cfg.pairs)?)?,
        None => Vec::new(),
    };
    let inputs = load_inputs(cfg)?;
    let dir = cfg.out.join("evaluate");
    let mut runs = Vec::new();
    for plan in plans(cfg, boxes.is_some())? {
        let label = plan.mitigation.to_string();
        let mut images = Vec::new();
        let mut used = std::collections::BTreeMap::new();
        for (id, (img, fs, orig_path)) in &inputs {
            let mut row = ImageMetrics { id: id.clone(), ..Default::default() };
            let mut notes = Vec::new();
            let kept = match mitigate(cfg, &plan, boxes.as_ref(), id, fs) {
                Ok(k) => k,
                Err(e) => {
                    row.note = Some(format!("mitigation skipped: {e}"));
                    images.push(row);
                    continue;
                }
            };
            if let Some(ckpt) = &ckpt {
                let recon = reconstruct_from_features(&kept, ckpt)?;
                row.ssim = Some(ssim(img, &recon)?);
                let recon_path = dir.join(format!("{id}.recon-{}.png", label.replace([':', '+'], "_")));
                std::fs::create_dir_all(&dir)?;
                recon.save(&recon_path)?;
                if let Some(backend) = &object_backend {
                    match (
                        detect_objects(img, orig_path, backend, cfg.min_confidence),
                        detect_objects(&recon, &recon_path, backend, cfg.min_confidence),
                    ) {
                        (Ok(o), Ok(r)) => {
                            let rec = object_recall_with(&o, &r, cfg.iou_threshold);
                            row.objects_orig = Some(rec.total);
                            row.objects_matched = Some(rec.matched);
                        }
                        (Err(e), _) | (_, Err(e)) => notes.push(format!("object recall unavailable: {e}")),
                    }
                }
            } else {
                notes.push("no checkpoint; reconstruction metrics skipped".into());
            }
            row.note = join_notes(notes);
            images.push(row);
            used.insert(id.clone(), kept);
        }
        let mut pair_rows = Vec::new();
        for (a, b) in &pairs {
            match (used.get(a), used.get(b)) {
                (Some(fa), Some(fb)) => {
                    let result = match_features(fa, fb, &cfg.matching)?;
                    pair_rows.push(PairMetrics { a: a.clone(), b: b.clone(), result });
                }
                _ => eprintln!("warning: pair {a} {b} skipped under {label}: features unavailable"),
            }
        }
        let report = MetricsReport::new(label.clone(), cfg.to_value(), images, pair_rows);
        let s = &report.summary;
        println!("{label}: mean SSIM {:?}, object recall {:?}, matching recall {:?}", s.mean_ssim, s.object_recall, s.matching_recall);
        runs.push(report);
    }
    let set = ReportSet { kind: "evaluate".into(), config_digest: cfg.digest(), config: cfg.to_value(), runs, budgets: Vec::new() };
    set.write(&cfg.out, "report")?;
    log_run(cfg, "evaluate", &format!("images={} pairs={}", inputs.len(), pairs.len()))
}
