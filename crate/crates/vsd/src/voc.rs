//! PASCAL VOC XML annotations to box and image-size tables.

use std::collections::BTreeMap;
use std::path::Path;

use vsd_core::anno::{ImageSize, ObjectBox};
use vsd_core::metrics::BBox;

use crate::error::{Error, Result};

fn child<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<roxmltree::Node<'a, 'a>> {
    node.children().find(|c| c.has_tag_name(name))
}

fn text<'a>(node: roxmltree::Node<'a, 'a>, name: &str) -> Option<&'a str> {
    child(node, name).and_then(|c| c.text()).map(str::trim)
}

/// Parses one annotation document. The image id is the file name without
/// extension, falling back to `fallback_id` when the document has none.
pub fn parse_voc(xml: &str, file: &str, fallback_id: &str) -> Result<(String, ImageSize, Vec<ObjectBox>)> {
    let err = |message: String| Error::Xml {
        file: file.into(),
        message,
    };
    let doc = roxmltree::Document::parse(xml).map_err(|e| err(e.to_string()))?;
    let root = doc.root_element();
    let id = text(root, "filename")
        .map(|f| f.rsplit_once('.').map_or(f, |(stem, _)| stem).to_string())
        .unwrap_or_else(|| fallback_id.to_string());
    let size = child(root, "size").ok_or_else(|| err("missing <size>".into()))?;
    let num = |node: roxmltree::Node<'_, '_>, name: &str| -> Result<f64> {
        text(node, name)
            .ok_or_else(|| err(format!("missing <{name}>")))?
            .parse::<f64>()
            .map_err(|_| err(format!("<{name}> is not a number")))
    };
    let image_size = ImageSize {
        width: num(size, "width")?,
        height: num(size, "height")?,
    };
    let flag = |node: roxmltree::Node<'_, '_>, name: &str| text(node, name).is_some_and(|t| t == "1");
    let mut boxes = Vec::new();
    for obj in root.children().filter(|c| c.has_tag_name("object")) {
        let class = text(obj, "name").ok_or_else(|| err("object without <name>".into()))?;
        let bb = child(obj, "bndbox").ok_or_else(|| err(format!("{class} object without <bndbox>")))?;
        let bbox = BBox::new(num(bb, "xmin")?, num(bb, "ymin")?, num(bb, "xmax")?, num(bb, "ymax")?)
            .map_err(|e| err(e.to_string()))?;
        boxes.push(ObjectBox {
            image_id: id.clone(),
            class: class.to_string(),
            bbox,
            truncated: flag(obj, "truncated"),
            occluded: flag(obj, "occluded"),
            difficult: flag(obj, "difficult"),
        });
    }
    Ok((id, image_size, boxes))
}

/// Converts every `*.xml` file of a directory, in file-name order.
pub fn convert_dir(dir: &Path) -> Result<(Vec<ObjectBox>, BTreeMap<String, ImageSize>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xml"))
        .collect();
    files.sort();
    let mut boxes = Vec::new();
    let mut sizes = BTreeMap::new();
    for path in files {
        let xml = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (id, size, b) = parse_voc(&xml, &path.display().to_string(), &stem)?;
        if sizes.insert(id.clone(), size).is_some() {
            return Err(Error::Invalid(format!("image `{id}` annotated twice")));
        }
        boxes.extend(b);
    }
    Ok((boxes, sizes))
}
