//! Privacy and utility measurements.

mod matching;
mod recall;
mod report;
mod ssim;

pub use matching::{
    epipolar_distance, fundamental_from_points, match_features, matching_recall, matching_recall_pairs, putative_matches,
    ransac_inliers, MatchConfig, MatchResult,
};
pub use recall::{object_recall, object_recall_with, ObjectRecall, DEFAULT_IOU_THRESHOLD};
pub use report::{config_digest, ImageMetrics, MetricsReport, PairMetrics, Summary};
pub use ssim::{ssim, SSIM_SIGMA, SSIM_WINDOW};
