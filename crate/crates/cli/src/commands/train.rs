use featleak::attack::{Checkpoint, CropSource, PerceptualTaps, Trainer};

use super::{log_run, write_file};
use crate::config::ExperimentConfig;
use crate::dataset::list_images;
use crate::error::{CliError, CliResult};

pub fn run(cfg: &ExperimentConfig, resume: bool) -> CliResult<()> {
    let entries = list_images(&cfg.require("images", &cfg.images)?)?;
    if entries.is_empty() {
        return Err(CliError::missing("image directory contains no images"));
    }
    let images = entries.iter().map(|e| e.load()).collect::<CliResult<Vec<_>>>()?;
    let backbone = match &cfg.backbone {
        Some(_) => PerceptualTaps::load(cfg.require("backbone", &cfg.backbone)?)?,
        None => PerceptualTaps::seeded(cfg.seed),
    };
    let mut trainer = if resume {
        let state = Checkpoint::load(cfg.require("checkpoint", &cfg.checkpoint)?)?;
        if state.method != cfg.method || state.detector != cfg.detector {
            return Err(CliError::Config("checkpoint method/detector differ from the configuration".into()));
        }
        Trainer::resume(state, backbone)?
    } else {
        Trainer::new(cfg.train.clone(), cfg.method, cfg.detector, backbone)?
    };
    let source = CropSource { images, method: cfg.method, detector: cfg.detector, max_keypoints: cfg.max_keypoints };
    let ckpt_dir = cfg.out.join("checkpoints");
    trainer.train(
        &source,
        |e| {
            let adv = match (e.l_adv_gen, e.l_disc) {
                (Some(g), Some(d)) => format!(" adv {g:.4} disc {d:.4}"),
                _ => String::new(),
            };
            println!("epoch {} mae {:.4} perc {:.4}{adv}", e.epoch, e.l_mae, e.l_perc);
        },
        |state| {
            std::fs::create_dir_all(&ckpt_dir)?;
            state.save(ckpt_dir.join(format!("epoch_{:04}.flar", state.epoch)))
        },
    )?;
    let state = trainer.state();
    state.save(cfg.out.join("model.flar"))?;
    write_file(&cfg.out.join("history.csv"), state.history_csv())?;
    println!("model written to {}", cfg.out.join("model.flar").display());
    log_run(cfg, "train", &format!("epochs={}", state.epoch))
}
