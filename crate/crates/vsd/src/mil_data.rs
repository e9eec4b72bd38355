//! MIL bags on disk: a bag table, a window table, one feature row per window
//! keyed `image_id#window_index`, and ground-truth boxes in the box table
//! format.

use std::collections::BTreeMap;
use std::path::Path;

use vsd_core::anno::ObjectBox;
use vsd_core::features::{FeatureLayout, FeatureMatrix};
use vsd_core::metrics::BBox;
use vsd_core::mil::{Bag, GroundTruth, SyntheticMil, WindowInstance};
use vsd_core::Diagnostic;

use crate::error::{Error, Result};
use crate::tables::{self, BagLabel, BagRow, WindowRow};
use crate::vsdf;

pub fn window_id(image_id: &str, index: usize) -> String {
    format!("{image_id}#{index}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilData {
    pub positives: Vec<Bag>,
    pub negatives: Vec<Bag>,
    pub ground_truth: GroundTruth,
    pub diagnostics: Vec<Diagnostic>,
}

/// Assembles bags from their tables. Window features are L2-normalized when
/// `normalize` is set. Ground truth keeps only boxes of `class` on positive
/// bags; a positive bag without such a box is reported.
pub fn assemble_bags(
    bags: &[BagRow],
    windows: &[WindowRow],
    features: &FeatureMatrix,
    boxes: &[ObjectBox],
    class: Option<&str>,
    normalize: bool,
) -> Result<MilData> {
    let mut by_image: BTreeMap<&str, BTreeMap<usize, BBox>> = BTreeMap::new();
    for w in windows {
        let bbox = BBox::new(w.xmin, w.ymin, w.xmax, w.ymax)?;
        if by_image.entry(&w.image_id).or_default().insert(w.window_index, bbox).is_some() {
            return Err(Error::Invalid(format!("window {} listed twice", window_id(&w.image_id, w.window_index))));
        }
    }
    let index: BTreeMap<&str, usize> = features.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut data = MilData {
        positives: Vec::new(),
        negatives: Vec::new(),
        ground_truth: GroundTruth::new(),
        diagnostics: Vec::new(),
    };
    for row in bags {
        let boxes_of = by_image.get(row.image_id.as_str());
        let mut instances = Vec::with_capacity(row.window_count);
        for w in 0..row.window_count {
            let id = window_id(&row.image_id, w);
            let bbox = boxes_of
                .and_then(|b| b.get(&w))
                .copied()
                .ok_or_else(|| Error::Invalid(format!("window {id} has no box")))?;
            let &r = index
                .get(id.as_str())
                .ok_or_else(|| Error::Invalid(format!("window {id} has no feature row")))?;
            let raw = features.row_f64(r);
            let features = if normalize {
                vsd_core::features::l2_normalize(&raw)?
            } else {
                raw
            };
            instances.push(WindowInstance {
                bbox,
                features,
                score: 0.0,
            });
        }
        let bag = Bag {
            image_id: row.image_id.clone(),
            positive: row.label == BagLabel::Positive,
            instances,
            difficulty: row.difficulty,
        };
        if bag.positive {
            data.positives.push(bag);
        } else {
            data.negatives.push(bag);
        }
    }
    for b in boxes {
        if class.is_some_and(|c| c != b.class) {
            continue;
        }
        if data.positives.iter().any(|p| p.image_id == b.image_id) {
            data.ground_truth.entry(b.image_id.clone()).or_default().push(b.bbox);
        }
    }
    for p in &data.positives {
        if !data.ground_truth.contains_key(&p.image_id) {
            data.diagnostics.push(Diagnostic::new(&p.image_id, "positive bag without a ground-truth box; not scored"));
        }
    }
    Ok(data)
}

pub fn load_bags(
    bags_csv: &Path,
    windows_csv: &Path,
    features: &Path,
    boxes_csv: &Path,
    class: Option<&str>,
    normalize: bool,
) -> Result<MilData> {
    let bags: Vec<BagRow> = tables::read_rows(bags_csv)?;
    let windows: Vec<WindowRow> = tables::read_rows(windows_csv)?;
    let features = vsdf::read_features_path(features)?;
    let boxes = tables::read_boxes(boxes_csv)?;
    assemble_bags(&bags, &windows, &features, &boxes, class, normalize)
}

/// File names used by [`write_synthetic_mil`].
pub const MIL_FILES: [&str; 4] = ["bags.csv", "windows.csv", "windows.vsdf", "gt_boxes.csv"];
pub const SYNTHETIC_CLASS: &str = "cat";

/// Writes a generated benchmark in the on-disk bag format.
pub fn write_synthetic_mil(dir: &Path, mil: &SyntheticMil) -> Result<()> {
    let all: Vec<&Bag> = mil.positives.iter().chain(&mil.negatives).collect();
    let bag_rows = all.iter().map(|b| BagRow {
        image_id: b.image_id.clone(),
        label: if b.positive { BagLabel::Positive } else { BagLabel::Negative },
        difficulty: b.difficulty,
        window_count: b.instances.len(),
    });
    tables::write_rows(&dir.join(MIL_FILES[0]), bag_rows)?;
    let mut window_rows = Vec::new();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let dim = all.first().and_then(|b| b.instances.first()).map_or(0, |w| w.features.len());
    for b in &all {
        for (i, w) in b.instances.iter().enumerate() {
            window_rows.push(WindowRow {
                image_id: b.image_id.clone(),
                window_index: i,
                xmin: w.bbox.xmin,
                ymin: w.bbox.ymin,
                xmax: w.bbox.xmax,
                ymax: w.bbox.ymax,
            });
            ids.push(window_id(&b.image_id, i));
            values.extend(w.features.iter().map(|&v| v as f32));
        }
    }
    tables::write_rows(&dir.join(MIL_FILES[1]), window_rows)?;
    let layout = (dim as u64 == FeatureLayout::single_window().dim()).then(FeatureLayout::single_window);
    let matrix = FeatureMatrix::new(ids, dim, values, layout)?;
    vsdf::write_features_path(&matrix, &dir.join(MIL_FILES[2]))?;
    let gt: Vec<ObjectBox> = mil
        .ground_truth
        .iter()
        .flat_map(|(id, boxes)| {
            boxes.iter().map(move |b| ObjectBox {
                image_id: id.clone(),
                class: SYNTHETIC_CLASS.into(),
                bbox: *b,
                truncated: false,
                occluded: false,
                difficult: false,
            })
        })
        .collect();
    tables::write_boxes(&dir.join(MIL_FILES[3]), &gt)
}
