//! Pascal VOC XML annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use roxmltree::Node;

use super::types::{BoundingBox, Dataset, GroundTruthObject, ImageRecord};
use crate::error::{Error, Result};

pub const VOC_CLASSES: [&str; 20] = [
    "aeroplane",
    "bicycle",
    "bird",
    "boat",
    "bottle",
    "bus",
    "car",
    "cat",
    "chair",
    "cow",
    "diningtable",
    "dog",
    "horse",
    "motorbike",
    "person",
    "pottedplant",
    "sheep",
    "sofa",
    "train",
    "tvmonitor",
];

struct RawObject {
    name: String,
    bbox: BoundingBox,
    difficult: bool,
}

struct RawImage {
    image_id: String,
    file_name: String,
    width: u32,
    height: u32,
    objects: Vec<RawObject>,
}

/// Parses one XML file, or every `*.xml` file of a directory in name order.
pub(crate) fn parse(path: &Path) -> Result<Dataset> {
    let files = if path.is_dir() {
        let mut files = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("xml")))
            .collect::<Vec<PathBuf>>();
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };

    let mut raw = Vec::with_capacity(files.len());
    for file in &files {
        let text = std::fs::read_to_string(file).map_err(|e| Error::io(file, e))?;
        let stem = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        raw.push(parse_document(&text, file, &stem)?);
    }
    assemble(raw)
}

pub(crate) fn parse_str(text: &str, image_id: &str) -> Result<Dataset> {
    let img = parse_document(text, Path::new("<memory>"), image_id)?;
    assemble(vec![img])
}

fn assemble(raw: Vec<RawImage>) -> Result<Dataset> {
    let names: BTreeSet<&str> = raw
        .iter()
        .flat_map(|i| i.objects.iter().map(|o| o.name.as_str()))
        .collect();
    let labels: Vec<String> = if names.iter().all(|n| VOC_CLASSES.contains(n)) {
        VOC_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        names.iter().map(|s| s.to_string()).collect()
    };
    let class_of: BTreeMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();

    let images = raw
        .iter()
        .map(|img| ImageRecord {
            image_id: img.image_id.clone(),
            width: img.width,
            height: img.height,
            objects: img
                .objects
                .iter()
                .map(|o| GroundTruthObject {
                    bbox: o.bbox,
                    class_id: class_of[o.name.as_str()],
                    difficult: o.difficult,
                })
                .collect(),
            clean_path: img.file_name.clone().into(),
            adversarial_paths: BTreeMap::new(),
        })
        .collect();
    let ids = (1..=labels.len() as i64).collect();
    Dataset::new(labels, ids, images)
}

fn parse_document(text: &str, file: &Path, stem: &str) -> Result<RawImage> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::parse(file.display().to_string(), e))?;
    let root = doc.root_element();
    let ctx = |node: Node, what: &str| {
        let pos = doc.text_pos_at(node.range().start);
        format!("{} (line {}, column {}): {what}", file.display(), pos.row, pos.col)
    };

    let file_name = child_text(root, "filename").unwrap_or_else(|| format!("{stem}.jpg"));
    let size = root
        .children()
        .find(|n| n.has_tag_name("size"))
        .ok_or_else(|| Error::parse(ctx(root, "missing <size>"), "width/height required"))?;
    let width = number::<u32>(size, "width").map_err(|m| Error::parse(ctx(size, "<size>"), m))?;
    let height = number::<u32>(size, "height").map_err(|m| Error::parse(ctx(size, "<size>"), m))?;

    let mut objects = Vec::new();
    for obj in root.children().filter(|n| n.has_tag_name("object")) {
        let name = child_text(obj, "name")
            .ok_or_else(|| Error::parse(ctx(obj, "<object>"), "missing <name>"))?;
        let difficult = match child_text(obj, "difficult").as_deref() {
            None | Some("0") | Some("") => false,
            Some("1") => true,
            Some(other) => {
                return Err(Error::parse(
                    ctx(obj, "<difficult>"),
                    format!("expected 0 or 1, got {other:?}"),
                ))
            }
        };
        let bnd = obj
            .children()
            .find(|n| n.has_tag_name("bndbox"))
            .ok_or_else(|| Error::parse(ctx(obj, "<object>"), "missing <bndbox>"))?;
        let coords = ["xmin", "ymin", "xmax", "ymax"]
            .iter()
            .map(|tag| number::<f64>(bnd, tag))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| Error::parse(ctx(bnd, "<bndbox>"), m))?;
        let bbox = BoundingBox::new(coords[0], coords[1], coords[2], coords[3])
            .map_err(|e| Error::parse(ctx(bnd, "<bndbox>"), e))?;
        objects.push(RawObject {
            name: name.trim().to_string(),
            bbox,
            difficult,
        });
    }

    Ok(RawImage {
        image_id: stem.to_string(),
        file_name,
        width,
        height,
        objects,
    })
}

fn child_text(node: Node, tag: &str) -> Option<String> {
    node.children()
        .find(|n| n.has_tag_name(tag))
        .map(|n| n.text().unwrap_or("").trim().to_string())
}

fn number<T: std::str::FromStr>(node: Node, tag: &str) -> std::result::Result<T, String> {
    let text = child_text(node, tag).ok_or_else(|| format!("missing <{tag}>"))?;
    text.parse::<T>()
        .map_err(|_| format!("<{tag}> is not a valid number: {text:?}"))
}
