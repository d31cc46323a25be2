//! Image directories, pair lists and box annotations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use featleak::detector::{image_id, sidecar_path};
use featleak::mitigate::{load_boxes, BoundingBox};
use featleak::Image;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// An input image known by its file stem.
#[derive(Clone, Debug)]
pub struct ImageEntry {
    pub id: String,
    pub path: PathBuf,
}

impl ImageEntry {
    pub fn load(&self) -> CliResult<Image> {
        Ok(Image::load(&self.path)?)
    }
}

/// Images in `dir`, sorted by id.
pub fn list_images(dir: &Path) -> CliResult<Vec<ImageEntry>> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::missing(format!("image directory {}: {e}", dir.display())))?;
    let mut out = Vec::new();
    for entry in rd {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if path.is_file() && ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
            out.push(ImageEntry { id: image_id(&path), path });
        }
    }
    out.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.path.cmp(&b.path)));
    if let Some(w) = out.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CliError::Config(format!("two images share the id `{}`", w[0].id)));
    }
    Ok(out)
}

/// Whitespace-separated id pairs; blank lines and `#` comments are skipped.
pub fn read_pairs(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(format!("pair list {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        let [a, b] = parts[..] else {
            return Err(CliError::Config(format!("{}:{}: expected two image ids", path.display(), n + 1)));
        };
        // Accept file names as well as ids.
        let id = |s: &str| image_id(Path::new(s));
        pairs.push((id(a), id(b)));
    }
    Ok(pairs)
}

#[derive(Deserialize)]
struct TaggedBox {
    image: String,
    #[serde(flatten)]
    bbox: BoundingBox,
}

/// Where per-image boxes come from.
pub enum BoxSource {
    Sidecars(PathBuf),
    Table(BTreeMap<String, Vec<BoundingBox>>),
}

impl BoxSource {
    pub fn open(path: &Path) -> CliResult<Self> {
        if path.is_dir() {
            return Ok(BoxSource::Sidecars(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| CliError::missing(format!("boxes {}: {e}", path.display())))?;
        let mut table: BTreeMap<String, Vec<BoundingBox>> = BTreeMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let t: TaggedBox = serde_json::from_str(line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            t.bbox.validate()?;
            table.entry(image_id(Path::new(&t.image))).or_default().push(t.bbox);
        }
        Ok(BoxSource::Table(table))
    }

    /// Boxes for one image, clipped and above `min_confidence`. A missing
    /// sidecar is an error; a table without the id means no boxes.
    pub fn boxes_for(&self, id: &str, height: usize, width: usize, min_confidence: f64) -> CliResult<Vec<BoundingBox>> {
        let raw = match self {
            BoxSource::Sidecars(dir) => {
                let p = sidecar_path(dir, id);
                if !p.exists() {
                    return Err(CliError::missing(format!("no box sidecar {}", p.display())));
                }
                load_boxes(&p)?
            }
            BoxSource::Table(t) => t.get(id).cloned().unwrap_or_default(),
        };
        let mut out: Vec<BoundingBox> =
            raw.into_iter().filter(|b| b.score >= min_confidence).filter_map(|b| b.clipped(height, width)).collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_accept_names_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pairs.txt");
        std::fs::write(&p, "# header\na.png b.png\n\nc d  # trailing\n").unwrap();
        assert_eq!(read_pairs(&p).unwrap(), vec![("a".into(), "b".into()), ("c".into(), "d".into())]);
        std::fs::write(&p, "a b c\n").unwrap();
        assert!(matches!(read_pairs(&p), Err(CliError::Config(_))));
    }

    #[test]
    fn box_table_groups_by_image() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("boxes.jsonl");
        std::fs::write(&p, "{\"image\":\"x.png\",\"x_min\":1,\"y_min\":1,\"x_max\":4,\"y_max\":4,\"class\":\"car\",\"score\":0.8}\n").unwrap();
        let src = BoxSource::open(&p).unwrap();
        assert_eq!(src.boxes_for("x", 8, 8, 0.5).unwrap().len(), 1);
        assert!(src.boxes_for("y", 8, 8, 0.5).unwrap().is_empty());
        let sidecars = BoxSource::open(dir.path()).unwrap();
        assert!(matches!(sidecars.boxes_for("x", 8, 8, 0.5), Err(CliError::MissingInput(_))));
    }
}
