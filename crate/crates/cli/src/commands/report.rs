use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use featleak::metrics::MetricsReport;
use serde::{Deserialize, Serialize};

use super::write_file;
use crate::error::{CliError, CliResult};
use crate::plot::{trade_off_svg, TradeOffPoint};

/// A group of reports produced by one `sweep` or `evaluate` run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportSet {
    pub kind: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub runs: Vec<MetricsReport>,
    /// Keypoint budget of each run, for sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub budgets: Vec<usize>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

impl ReportSet {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("label,mean_ssim,privacy,object_recall,matching_recall\n");
        for r in &self.runs {
            let m = &r.summary;
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.label,
                opt(m.mean_ssim),
                opt(m.mean_ssim.map(|v| 1.0 - v)),
                opt(m.object_recall),
                opt(m.matching_recall)
            );
        }
        s
    }

    pub fn trade_off(&self) -> Vec<TradeOffPoint> {
        self.budgets
            .iter()
            .zip(&self.runs)
            .map(|(&n, r)| TradeOffPoint { n, privacy: r.summary.mean_ssim.map(|v| 1.0 - v), utility: r.summary.matching_recall })
            .collect()
    }

    /// JSON plus summary CSV, per-run CSVs and, for sweeps, the trade-off plot.
    pub fn write(&self, dir: &Path, stem: &str) -> CliResult<()> {
        write_file(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        write_file(&dir.join(format!("{stem}.csv")), self.summary_csv())?;
        for r in &self.runs {
            let label = sanitize(&r.label);
            write_file(&dir.join(format!("{stem}_{label}_images.csv")), r.to_csv())?;
            write_file(&dir.join(format!("{stem}_{label}_pairs.csv")), r.pairs_csv())?;
        }
        if !self.budgets.is_empty() {
            let svg = dir.join(format!("{stem}.svg"));
            if let Err(e) = trade_off_svg(&self.trade_off(), &svg) {
                eprintln!("warning: plot {} not rendered: {e}", svg.display());
            }
        }
        Ok(())
    }
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

/// Combines report files into `<out>/summary.csv` (one row per run).
pub fn run(inputs: &[PathBuf], out: &Path) -> CliResult<()> {
    let mut table = String::from("source,kind,label,mean_ssim,privacy,object_recall,matching_recall\n");
    let mut points = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(format!("report {}: {e}", path.display())))?;
        let set: ReportSet = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{} is not a report: {e}", path.display())))?;
        let src = path.display().to_string();
        for line in set.summary_csv().lines().skip(1) {
            let _ = writeln!(table, "{src},{},{line}", set.kind);
        }
        points.extend(set.trade_off());
    }
    write_file(&out.join("summary.csv"), &table)?;
    if !points.is_empty() {
        points.sort_by_key(|p| p.n);
        if let Err(e) = trade_off_svg(&points, &out.join("summary.svg")) {
            eprintln!("warning: plot not rendered: {e}");
        }
    }
    print!("{table}");
    Ok(())
}
