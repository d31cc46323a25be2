use serde::{Deserialize, Serialize};

use crate::detector::Detection;

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecall {
    /// `matched / total`, or 1 when the reference list is empty.
    pub recall: f64,
    pub matched: usize,
    pub total: usize,
    /// `(reference index, reconstruction index)` of each match.
    pub pairs: Vec<(usize, usize)>,
}

impl ObjectRecall {
    /// True when there was nothing to recall and the 1.0 is by convention.
    pub fn empty_reference(&self) -> bool {
        self.total == 0
    }
}

/// Greedy one-to-one matching of same-class boxes by descending IoU, keeping
/// pairs with IoU at least `iou_threshold`.
pub fn object_recall_with(orig: &[Detection], recon: &[Detection], iou_threshold: f64) -> ObjectRecall {
    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, a) in orig.iter().enumerate() {
        for (j, b) in recon.iter().enumerate() {
            if a.class == b.class {
                let iou = a.iou(b);
                if iou >= iou_threshold {
                    cands.push((iou, i, j));
                }
            }
        }
    }
    cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; orig.len()], vec![false; recon.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    let total = orig.len();
    let matched = pairs.len();
    let recall = if total == 0 { 1.0 } else { matched as f64 / total as f64 };
    ObjectRecall { recall, matched, total, pairs }
}

pub fn object_recall(orig: &[Detection], recon: &[Detection]) -> ObjectRecall {
    object_recall_with(orig, recon, DEFAULT_IOU_THRESHOLD)
}
