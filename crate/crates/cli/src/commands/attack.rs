use featleak::attack::reconstruct_from_features;

use super::{input_features, load_checkpoint, log_run, mitigate, open_boxes};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Writes `<out>/recon/<id>.png` and the features the generator saw as `<id>.sfv`.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let ckpt = load_checkpoint(cfg)?;
    let plan = cfg.plan()?;
    let boxes = open_boxes(cfg)?;
    let inputs = input_features(cfg)?;
    let dir = cfg.out.join("recon");
    std::fs::create_dir_all(&dir)?;
    for (id, fs) in &inputs {
        let used = mitigate(cfg, &plan, boxes.as_ref(), id, fs)?;
        let recon = reconstruct_from_features(&used, &ckpt)?;
        recon.save(dir.join(format!("{id}.png")))?;
        used.save(dir.join(format!("{id}.sfv")))?;
        println!("{id}: {} of {} features used", used.len(), fs.len());
    }
    log_run(cfg, "attack", &format!("images={} mitigation={}", inputs.len(), plan.mitigation))
}
