//! Object detection adapters. Nothing is trained or bundled here: the stub
//! backend replays sidecar annotations and the external backend runs a
//! user-supplied command.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mitigate::{read_boxes, BoundingBox};

/// A detected object; `score` is the detector confidence.
pub type Detection = BoundingBox;

pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "backend")]
pub enum DetectorBackend {
    /// Reads `<dir>/<image id>.boxes.jsonl`.
    Stub { sidecar_dir: PathBuf },
    /// Runs `program args... <image path>` and parses box JSON lines from stdout.
    External { program: String, #[serde(default)] args: Vec<String> },
}

/// Identifier used to key sidecar files: the file name without its extension.
pub fn image_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn sidecar_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.boxes.jsonl"))
}

fn run_external(program: &str, args: &[String], image_path: &Path) -> Result<Vec<BoundingBox>> {
    let out = Command::new(program)
        .args(args)
        .arg(image_path)
        .output()
        .map_err(|e| Error::BackendUnavailable(format!("cannot run detector `{program}`: {e}")))?;
    if !out.status.success() {
        return Err(Error::BackendUnavailable(format!(
            "detector `{program}` exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    read_boxes(out.stdout.as_slice())
}

/// Detections with confidence at least `min_confidence`, clipped to the image
/// and sorted by descending confidence.
pub fn detect_objects(image: &Image, image_path: &Path, backend: &DetectorBackend, min_confidence: f64) -> Result<Vec<Detection>> {
    if !(0.0..=1.0).contains(&min_confidence) {
        return Err(Error::Config(format!("min_confidence {min_confidence} outside [0, 1]")));
    }
    let raw = match backend {
        DetectorBackend::Stub { sidecar_dir } => {
            let path = sidecar_path(sidecar_dir, &image_id(image_path));
            let file = std::fs::File::open(&path)
                .map_err(|e| Error::Dataset(format!("missing sidecar annotations {}: {e}", path.display())))?;
            read_boxes(std::io::BufReader::new(file))?
        }
        DetectorBackend::External { program, args } => run_external(program, args, image_path)?,
    };
    Ok(postprocess(raw, image.height(), image.width(), min_confidence))
}

pub(crate) fn postprocess(raw: Vec<BoundingBox>, height: usize, width: usize, min_confidence: f64) -> Vec<Detection> {
    let mut dets: Vec<Detection> =
        raw.into_iter().filter(|b| b.score >= min_confidence).filter_map(|b| b.clipped(height, width)).collect();
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    dets
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_sidecar(dir: &Path, id: &str, body: &str) {
        std::fs::write(sidecar_path(dir, id), body).unwrap();
    }

    #[test]
    fn stub_passthrough_and_threshold() {
        let dir = tempfile::tempdir().unwrap();
        write_sidecar(dir.path(), "scene", "{\"x_min\":2,\"y_min\":3,\"x_max\":20,\"y_max\":30,\"class\":\"person\",\"score\":0.9}\n");
        let img = Image::filled(32, 32, 0.5).unwrap();
        let backend = DetectorBackend::Stub { sidecar_dir: dir.path().to_path_buf() };
        let d = detect_objects(&img, Path::new("imgs/scene.png"), &backend, 0.5).unwrap();
        assert_eq!(d, vec![BoundingBox::new(2.0, 3.0, 20.0, 30.0, "person", 0.9).unwrap()]);
        assert!(detect_objects(&img, Path::new("scene.png"), &backend, 1.0).unwrap().is_empty());
        assert!(detect_objects(&img, Path::new("other.png"), &backend, 0.5).is_err());
    }

    #[test]
    fn boxes_are_clipped_and_sorted() {
        let raw = vec![
            BoundingBox::new(-5.0, 0.0, 10.0, 50.0, "a", 0.6).unwrap(),
            BoundingBox::new(1.0, 1.0, 4.0, 4.0, "b", 0.95).unwrap(),
            BoundingBox::new(40.0, 40.0, 50.0, 50.0, "c", 0.99).unwrap(),
        ];
        let d = postprocess(raw, 32, 32, 0.5);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].class, "b");
        assert_eq!((d[1].x_min, d[1].y_max), (0.0, 32.0));
    }

    #[test]
    fn missing_external_backend_is_an_error() {
        let img = Image::filled(8, 8, 0.5).unwrap();
        let backend = DetectorBackend::External { program: "/nonexistent/detector-binary".into(), args: vec![] };
        assert!(matches!(detect_objects(&img, Path::new("x.png"), &backend, 0.5), Err(Error::BackendUnavailable(_))));
    }

    #[test]
    fn invalid_threshold_rejected() {
        let img = Image::filled(8, 8, 0.5).unwrap();
        let backend = DetectorBackend::Stub { sidecar_dir: PathBuf::from(".") };
        assert!(matches!(detect_objects(&img, Path::new("x.png"), &backend, 1.5), Err(Error::Config(_))));
    }
}
