use super::{input_features, log_run, mitigate, open_boxes, write_file};
use crate::config::ExperimentConfig;
use crate::error::CliResult;

/// Writes mitigated feature files to `<out>/mitigated` with a CSV of kept counts.
pub fn run(cfg: &ExperimentConfig) -> CliResult<()> {
    let plan = cfg.plan()?;
    let boxes = open_boxes(cfg)?;
    let inputs = input_features(cfg)?;
    let dir = cfg.out.join("mitigated");
    std::fs::create_dir_all(&dir)?;
    let mut table = String::from("image_id,before,after\n");
    for (id, fs) in &inputs {
        let kept = mitigate(cfg, &plan, boxes.as_ref(), id, fs)?;
        kept.save(dir.join(format!("{id}.sfv")))?;
        table += &format!("{id},{},{}\n", fs.len(), kept.len());
    }
    write_file(&dir.join("counts.csv"), table)?;
    println!("mitigation {} applied to {} feature sets", plan.mitigation, inputs.len());
    log_run(cfg, "mitigate", &format!("images={} mitigation={}", inputs.len(), plan.mitigation))
}
