use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::MatchResult;

/// Per-image privacy measurements; `None` marks a metric that could not be computed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub id: String,
    pub ssim: Option<f64>,
    pub objects_orig: Option<usize>,
    pub objects_matched: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub result: MatchResult,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean_ssim: Option<f64>,
    pub object_recall: Option<f64>,
    pub matching_recall: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub config_digest: String,
    pub config: serde_json::Value,
    pub images: Vec<ImageMetrics>,
    pub pairs: Vec<PairMetrics>,
    pub summary: Summary,
}

/// SHA-256 of the compact JSON form; object keys are sorted.
pub fn config_digest(config: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values always serialize");
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

impl MetricsReport {
    /// Builds the report and fills in the summary from the per-item rows.
    pub fn new(label: impl Into<String>, config: serde_json::Value, images: Vec<ImageMetrics>, pairs: Vec<PairMetrics>) -> Self {
        let ssims: Vec<f64> = images.iter().filter_map(|i| i.ssim).collect();
        let mean_ssim = (!ssims.is_empty()).then(|| ssims.iter().sum::<f64>() / ssims.len() as f64);
        let (mut orig, mut matched) = (0usize, 0usize);
        let mut any_objects = false;
        for i in &images {
            if let (Some(o), Some(m)) = (i.objects_orig, i.objects_matched) {
                any_objects = true;
                orig += o;
                matched += m;
            }
        }
        let object_recall = any_objects.then(|| if orig == 0 { 1.0 } else { matched as f64 / orig as f64 });
        let matching_recall =
            (!pairs.is_empty()).then(|| pairs.iter().filter(|p| p.result.success).count() as f64 / pairs.len() as f64);
        Self {
            label: label.into(),
            config_digest: config_digest(&config),
            config,
            images,
            pairs,
            summary: Summary { mean_ssim, object_recall, matching_recall },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One row per image; `pair_successes` counts successful pairs naming the image.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image_id,ssim,objects_orig,objects_matched,pair_successes\n");
        for img in &self.images {
            let succ = self.pairs.iter().filter(|p| p.result.success && (p.a == img.id || p.b == img.id)).count();
            let _ = writeln!(s, "{},{},{},{},{}", img.id, opt(&img.ssim), opt(&img.objects_orig), opt(&img.objects_matched), succ);
        }
        s
    }

    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("a,b,putative,inliers,success\n");
        for p in &self.pairs {
            let _ = writeln!(s, "{},{},{},{},{}", p.a, p.b, p.result.putative, p.result.inliers, p.result.success);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_csv() {
        let images = vec![
            ImageMetrics { id: "a".into(), ssim: Some(0.5), objects_orig: Some(2), objects_matched: Some(1), note: None },
            ImageMetrics { id: "b".into(), ssim: None, objects_orig: None, objects_matched: None, note: Some("missing".into()) },
        ];
        let ok = MatchResult { putative: 30, inliers: 25, success: true };
        let bad = MatchResult { putative: 3, inliers: 0, success: false };
        let pairs = ["x", "y", "z"].iter().map(|n| PairMetrics { a: "a".into(), b: n.to_string(), result: ok }).chain(std::iter::once(PairMetrics { a: "b".into(), b: "c".into(), result: bad })).collect();
        let r = MetricsReport::new("t", serde_json::json!({"k": 1}), images, pairs);
        assert_eq!(r.summary.matching_recall, Some(0.75));
        assert_eq!(r.summary.mean_ssim, Some(0.5));
        assert_eq!(r.summary.object_recall, Some(0.5));
        assert_eq!(r.to_csv(), "image_id,ssim,objects_orig,objects_matched,pair_successes\na,0.5,2,1,3\nb,NA,NA,NA,0\n");
        assert_eq!(r.config_digest, config_digest(&serde_json::json!({"k": 1})));
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
