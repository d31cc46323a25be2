//! Privacy mitigations applied to a feature set before it is shared.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, Keypoint};

/// Axis-aligned box in pixel coordinates with a class label and confidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub class: String,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64, class: impl Into<String>, score: f64) -> Result<Self> {
        let b = Self { x_min, y_min, x_max, y_max, class: class.into(), score };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.y_min, self.x_max, self.y_max, self.score].iter().all(|v| v.is_finite());
        if !finite || self.x_min >= self.x_max || self.y_min >= self.y_max || !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidInput(format!("invalid box {self:?}")));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    /// Intersection over union; zero when disjoint.
    pub fn iou(&self, other: &Self) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            return 0.0;
        }
        let inter = w * h;
        inter / (self.area() + other.area() - inter)
    }

    /// Boundary-inclusive point test after growing the box by `margin`.
    pub fn contains(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x_min - margin && x <= self.x_max + margin && y >= self.y_min - margin && y <= self.y_max + margin
    }

    /// Clips to `[0, width] x [0, height]`; `None` if nothing remains.
    pub fn clipped(&self, height: usize, width: usize) -> Option<Self> {
        let b = Self {
            x_min: self.x_min.clamp(0.0, width as f64),
            y_min: self.y_min.clamp(0.0, height as f64),
            x_max: self.x_max.clamp(0.0, width as f64),
            y_max: self.y_max.clamp(0.0, height as f64),
            ..self.clone()
        };
        (b.x_min < b.x_max && b.y_min < b.y_max).then_some(b)
    }
}

/// Reads one JSON box per non-empty line.
pub fn read_boxes(r: impl BufRead) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let b: BoundingBox =
            serde_json::from_str(&line).map_err(|e| Error::Format(format!("box record on line {}: {e}", n + 1)))?;
        b.validate()?;
        out.push(b);
    }
    Ok(out)
}

pub fn write_boxes(boxes: &[BoundingBox], w: &mut impl Write) -> Result<()> {
    for b in boxes {
        serde_json::to_writer(&mut *w, b)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<BoundingBox>> {
    read_boxes(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Keeps the `n` strongest features; equal responses favour earlier entries.
/// Survivors keep their original relative order.
pub fn reduce_top_n(features: &FeatureSet, n: usize) -> FeatureSet {
    let mut idx: Vec<usize> = (0..features.len()).collect();
    let resp = |i: usize| features.features()[i].keypoint.response;
    idx.sort_by(|&a, &b| resp(b).total_cmp(&resp(a)).then(a.cmp(&b)));
    let mut keep = vec![false; features.len()];
    idx.into_iter().take(n).for_each(|i| keep[i] = true);
    features.filtered(|i, _| keep[i])
}

fn in_any(kp: &Keypoint, boxes: &[BoundingBox], margin: f64) -> bool {
    boxes.iter().any(|b| b.contains(kp.x as f64, kp.y as f64, margin))
}

/// Removes every feature whose keypoint lies inside any box, edges included.
pub fn suppress_in_boxes(features: &FeatureSet, boxes: &[BoundingBox]) -> FeatureSet {
    suppress_in_boxes_with_margin(features, boxes, 0.0)
}

/// As [`suppress_in_boxes`] with each box grown by `margin` pixels.
pub fn suppress_in_boxes_with_margin(features: &FeatureSet, boxes: &[BoundingBox], margin: f64) -> FeatureSet {
    features.filtered(|_, f| !in_any(&f.keypoint, boxes, margin))
}

/// Order of the two steps when both are requested.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineOrder {
    #[default]
    CapThenSuppress,
    SuppressThenCap,
}

impl FromStr for PipelineOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cap-then-suppress" => Ok(Self::CapThenSuppress),
            "suppress-then-cap" => Ok(Self::SuppressThenCap),
            _ => Err(Error::Config(format!("unknown pipeline order `{s}`"))),
        }
    }
}

/// Which mitigation to apply. Text form: `none`, `reduce:<N>`, `suppress`,
/// `reduce+suppress:<N>`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Mitigation {
    #[default]
    None,
    Reduce { n: usize },
    Suppress,
    ReduceSuppress { n: usize },
}

impl Mitigation {
    pub fn needs_boxes(&self) -> bool {
        matches!(self, Mitigation::Suppress | Mitigation::ReduceSuppress { .. })
    }
}

impl fmt::Display for Mitigation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mitigation::None => write!(f, "none"),
            Mitigation::Reduce { n } => write!(f, "reduce:{n}"),
            Mitigation::Suppress => write!(f, "suppress"),
            Mitigation::ReduceSuppress { n } => write!(f, "reduce+suppress:{n}"),
        }
    }
}

impl FromStr for Mitigation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid mitigation `{s}` (expected none, reduce:N, suppress or reduce+suppress:N)"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a.parse::<usize>().map_err(|_| bad())?)),
            None => (s, None),
        };
        match (kind, arg) {
            ("none", None) => Ok(Mitigation::None),
            ("suppress", None) => Ok(Mitigation::Suppress),
            ("reduce", Some(n)) => Ok(Mitigation::Reduce { n }),
            ("reduce+suppress", Some(n)) => Ok(Mitigation::ReduceSuppress { n }),
            _ => Err(bad()),
        }
    }
}

/// Mitigation settings as used by the pipeline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MitigationPlan {
    pub mitigation: Mitigation,
    pub order: PipelineOrder,
    pub margin: f64,
}

impl MitigationPlan {
    pub fn new(mitigation: Mitigation) -> Self {
        Self { mitigation, ..Default::default() }
    }

    pub fn apply(&self, features: &FeatureSet, boxes: &[BoundingBox]) -> FeatureSet {
        let suppress = |f: &FeatureSet| suppress_in_boxes_with_margin(f, boxes, self.margin);
        match self.mitigation {
            Mitigation::None => features.clone(),
            Mitigation::Reduce { n } => reduce_top_n(features, n),
            Mitigation::Suppress => suppress(features),
            Mitigation::ReduceSuppress { n } => match self.order {
                PipelineOrder::CapThenSuppress => suppress(&reduce_top_n(features, n)),
                PipelineOrder::SuppressThenCap => reduce_top_n(&suppress(features), n),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Feature, Method};

    fn set(points: &[(f32, f32, f32)]) -> FeatureSet {
        let feats = points
            .iter()
            .map(|&(x, y, r)| Feature { keypoint: Keypoint::new(x, y, r, 1.0), descriptor: vec![0.5; 64] })
            .collect();
        FeatureSet::new(Method::Binary, 64, 64, feats).unwrap()
    }

    #[test]
    fn reduce_examples() {
        let fs = set(&[(1.0, 1.0, 0.9), (2.0, 2.0, 0.5), (3.0, 3.0, 0.7)]);
        let r: Vec<f32> = reduce_top_n(&fs, 2).keypoints().map(|k| k.response).collect();
        assert_eq!(r, vec![0.9, 0.7]);
        assert!(reduce_top_n(&fs, 0).is_empty());
        assert_eq!(reduce_top_n(&fs, 1000), fs);
    }

    #[test]
    fn suppress_examples() {
        let fs = set(&[(5.0, 5.0, 1.0), (20.0, 20.0, 0.5)]);
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0, "person", 0.9).unwrap();
        let out = suppress_in_boxes(&fs, &[b.clone()]);
        assert_eq!(out.keypoints().map(|k| (k.x, k.y)).collect::<Vec<_>>(), vec![(20.0, 20.0)]);
        assert_eq!(suppress_in_boxes(&fs, &[]), fs);
        let edge = set(&[(10.0, 3.0, 1.0)]);
        assert!(suppress_in_boxes(&edge, &[b]).is_empty());
        let all = BoundingBox::new(0.0, 0.0, 64.0, 64.0, "car", 0.5).unwrap();
        assert!(suppress_in_boxes(&fs, &[all]).is_empty());
    }

    #[test]
    fn order_matters() {
        let fs = set(&[(5.0, 5.0, 0.9), (30.0, 30.0, 0.5), (40.0, 40.0, 0.4)]);
        let boxes = [BoundingBox::new(0.0, 0.0, 10.0, 10.0, "person", 0.9).unwrap()];
        let mut plan = MitigationPlan::new(Mitigation::ReduceSuppress { n: 1 });
        assert!(plan.apply(&fs, &boxes).is_empty());
        plan.order = PipelineOrder::SuppressThenCap;
        assert_eq!(plan.apply(&fs, &boxes).len(), 1);
    }

    #[test]
    fn mitigation_text_round_trip() {
        for m in [Mitigation::None, Mitigation::Reduce { n: 200 }, Mitigation::Suppress, Mitigation::ReduceSuppress { n: 50 }] {
            assert_eq!(m.to_string().parse::<Mitigation>().unwrap(), m);
        }
        for bad in ["reduce", "reduce:-1", "suppress:3", "blur"] {
            assert!(matches!(bad.parse::<Mitigation>(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn box_jsonl_round_trip() {
        let boxes = vec![
            BoundingBox::new(1.0, 2.0, 30.5, 40.0, "person", 0.9).unwrap(),
            BoundingBox::new(0.0, 0.0, 5.0, 5.0, "dog", 0.25).unwrap(),
        ];
        let mut buf = Vec::new();
        write_boxes(&boxes, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("{\"x_min\":1.0,\"y_min\":2.0"));
        assert_eq!(read_boxes(buf.as_slice()).unwrap(), boxes);
        assert!(read_boxes(&b"{\"x_min\":5,\"y_min\":0,\"x_max\":1,\"y_max\":2,\"class\":\"a\",\"score\":0.5}\n"[..]).is_err());
    }

    #[test]
    fn iou_half_overlap() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0, "a", 1.0).unwrap();
        let b = BoundingBox::new(0.0, 0.0, 10.0, 5.0, "a", 1.0).unwrap();
        assert_eq!(a.iou(&b), 0.5);
        assert_eq!(a.clipped(8, 20).unwrap().y_max, 8.0);
        assert!(a.clipped(0, 20).is_none());
    }
}
