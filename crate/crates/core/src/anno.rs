//! Timed yes/no annotations to per-image difficulty scores.
//!
//! The cleaning order is fixed: long responses are dropped first, then
//! annotators are screened on accuracy and on how many answers they gave, and
//! the remaining per-annotator times are z-scored. Each image's score is the
//! geometric mean of its z-scores after a global positive shift, plus an
//! additive penalty proportional to its share of wrong answers.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::metrics::{sample_std, BBox};
use crate::{Diagnostic, Error, Result};

/// Class names of the 20-class benchmark the annotation protocol targets.
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

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    /// The asked-about class is present in the image.
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Answer {
    Yes,
    No,
}

/// One annotator's timed answer to "is there a {class} in the image?".
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseRecord {
    pub annotator_id: String,
    pub image_id: String,
    pub question_class: String,
    pub polarity: Polarity,
    pub answer: Answer,
    /// Raw wall time in seconds.
    pub response_time: f64,
}

impl ResponseRecord {
    pub fn is_correct(&self) -> bool {
        (self.answer == Answer::Yes) == (self.polarity == Polarity::Positive)
    }
}

pub const DEFAULT_MAX_RESPONSE_TIME: f64 = 20.0;
pub const DEFAULT_PENALTY_WEIGHT: f64 = 0.5;

/// Keeps records answered within `max_time` seconds, preserving order.
pub fn filter_long_times(records: &[ResponseRecord], max_time: f64) -> Vec<ResponseRecord> {
    records
        .iter()
        .filter(|r| r.response_time <= max_time)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorStats {
    pub annotator_id: String,
    pub count: usize,
    pub mean_time: f64,
    /// Sample standard deviation; zero when `count < 2`.
    pub std_time: f64,
    pub accuracy: f64,
}

impl AnnotatorStats {
    /// Fewer than two answers: the spread is undefined and reported as zero.
    pub fn is_degenerate(&self) -> bool {
        self.count < 2
    }
}

/// Per-annotator time statistics and accuracy against question polarity.
pub fn annotator_stats(records: &[ResponseRecord]) -> BTreeMap<String, AnnotatorStats> {
    let mut grouped: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let entry = grouped.entry(&r.annotator_id).or_default();
        entry.0.push(r.response_time);
        if r.is_correct() {
            entry.1 += 1;
        }
    }
    grouped
        .into_iter()
        .map(|(id, (times, correct))| {
            let count = times.len();
            let stats = AnnotatorStats {
                annotator_id: String::from(id),
                count,
                mean_time: times.iter().sum::<f64>() / count as f64,
                std_time: sample_std(&times),
                accuracy: correct as f64 / count as f64,
            };
            (String::from(id), stats)
        })
        .collect()
}

/// Screening thresholds for annotators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnotatorRules {
    pub min_accuracy: f64,
    pub min_count: usize,
    /// Annotators with fewer answers than this are also dropped when slow.
    pub sparse_count: usize,
    pub slow_mean_time: f64,
}

impl Default for AnnotatorRules {
    fn default() -> Self {
        Self {
            min_accuracy: 0.90,
            min_count: 3,
            sparse_count: 10,
            slow_mean_time: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Exclusion {
    LowAccuracy { accuracy: f64 },
    TooFewAnswers { count: usize },
    SparseAndSlow { count: usize, mean_time: f64 },
    ZeroVariance,
}

impl core::fmt::Display for Exclusion {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Exclusion::LowAccuracy { accuracy } => write!(f, "accuracy {accuracy:.3} below threshold"),
            Exclusion::TooFewAnswers { count } => write!(f, "only {count} answers"),
            Exclusion::SparseAndSlow { count, mean_time } => {
                write!(f, "{count} answers with mean time {mean_time:.3} s")
            }
            Exclusion::ZeroVariance => write!(f, "zero response-time variance"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnnotatorSelection {
    pub retained: BTreeSet<String>,
    pub excluded: BTreeMap<String, Exclusion>,
}

/// Applies the accuracy rule, then the count rules. An annotator that is both
/// sparse (`count < sparse_count`) and slow (`mean_time > slow_mean_time`) is
/// dropped; slow annotators with many answers are kept.
pub fn filter_annotators(
    stats: &BTreeMap<String, AnnotatorStats>,
    rules: &AnnotatorRules,
) -> AnnotatorSelection {
    let mut out = AnnotatorSelection::default();
    for (id, s) in stats {
        let reason = if s.accuracy < rules.min_accuracy {
            Some(Exclusion::LowAccuracy { accuracy: s.accuracy })
        } else if s.count < rules.min_count {
            Some(Exclusion::TooFewAnswers { count: s.count })
        } else if s.count < rules.sparse_count && s.mean_time > rules.slow_mean_time {
            Some(Exclusion::SparseAndSlow {
                count: s.count,
                mean_time: s.mean_time,
            })
        } else {
            None
        };
        match reason {
            Some(r) => {
                out.excluded.insert(id.clone(), r);
            }
            None => {
                out.retained.insert(id.clone());
            }
        }
    }
    out
}

/// A response whose time has been z-scored within its annotator.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedRecord {
    pub annotator_id: String,
    pub image_id: String,
    pub z: f64,
    pub correct: bool,
}

/// Z-scores every record whose annotator appears in `stats`, using that
/// annotator's mean and sample standard deviation. Annotators with zero spread
/// are excluded with a diagnostic; records of annotators missing from `stats`
/// are skipped.
pub fn normalize_times(
    records: &[ResponseRecord],
    stats: &BTreeMap<String, AnnotatorStats>,
) -> (Vec<NormalizedRecord>, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();
    for s in stats.values() {
        if !(s.std_time > 0.0) {
            diagnostics.push(Diagnostic::new(&s.annotator_id, Exclusion::ZeroVariance));
        }
    }
    let out = records
        .iter()
        .filter_map(|r| {
            let s = stats.get(&r.annotator_id)?;
            if !(s.std_time > 0.0) {
                return None;
            }
            Some(NormalizedRecord {
                annotator_id: r.annotator_id.clone(),
                image_id: r.image_id.clone(),
                z: (r.response_time - s.mean_time) / s.std_time,
                correct: r.is_correct(),
            })
        })
        .collect();
    (out, diagnostics)
}

/// Shift making every shifted z-score at least one: `1 + max(0, -min z)`.
pub fn geometric_shift(z_values: impl IntoIterator<Item = f64>) -> f64 {
    let min = z_values.into_iter().fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        1.0 + (-min).max(0.0)
    } else {
        1.0
    }
}

/// `exp(mean(ln(z + shift))) - shift`. The values are summed in sorted order,
/// so the result does not depend on input order.
pub fn shifted_geometric_mean(z_values: &[f64], shift: f64) -> Result<f64> {
    if z_values.is_empty() {
        return Err(Error::Empty("image records"));
    }
    let mut logs = Vec::with_capacity(z_values.len());
    for &z in z_values {
        let v = z + shift;
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param("shift", format!("z + shift = {v} is not positive")));
        }
        logs.push(libm::log(v));
    }
    if z_values.iter().all(|&z| z == z_values[0]) {
        return Ok(z_values[0]);
    }
    logs.sort_by(f64::total_cmp);
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    Ok(libm::exp(mean) - shift)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyScore {
    pub image_id: String,
    pub score: f64,
    pub n_retained: usize,
    pub n_wrong: usize,
}

/// Unpenalized geometric-mean score per image, in image-id order.
pub fn image_difficulty(records: &[NormalizedRecord], shift: f64) -> Result<Vec<DifficultyScore>> {
    let mut grouped: BTreeMap<&str, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records {
        let e = grouped.entry(&r.image_id).or_default();
        e.0.push(r.z);
        if !r.correct {
            e.1 += 1;
        }
    }
    grouped
        .into_iter()
        .map(|(id, (z, wrong))| {
            Ok(DifficultyScore {
                image_id: String::from(id),
                score: shifted_geometric_mean(&z, shift)?,
                n_retained: z.len(),
                n_wrong: wrong,
            })
        })
        .collect()
}

/// `score + weight * n_wrong / n_total`.
pub fn apply_wrong_answer_penalty(score: f64, n_wrong: usize, n_total: usize, weight: f64) -> Result<f64> {
    if n_total == 0 {
        return Err(Error::param("n_total", "must be positive"));
    }
    if n_wrong > n_total {
        return Err(Error::param("n_wrong", "exceeds n_total"));
    }
    if !(weight >= 0.0) {
        return Err(Error::param("penalty_weight", "must be non-negative"));
    }
    Ok(score + weight * n_wrong as f64 / n_total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub max_time: f64,
    pub rules: AnnotatorRules,
    pub penalty_weight: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            max_time: DEFAULT_MAX_RESPONSE_TIME,
            rules: AnnotatorRules::default(),
            penalty_weight: DEFAULT_PENALTY_WEIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Final (penalized) scores in image-id order.
    pub scores: Vec<DifficultyScore>,
    pub shift: f64,
    pub stats: BTreeMap<String, AnnotatorStats>,
    pub selection: AnnotatorSelection,
    pub normalized: Vec<NormalizedRecord>,
    pub n_long_removed: usize,
    pub diagnostics: Vec<Diagnostic>,
}

/// Runs the full cleaning and scoring chain over a raw log.
pub fn score_images(records: &[ResponseRecord], config: &PipelineConfig) -> Result<PipelineOutput> {
    let timed = filter_long_times(records, config.max_time);
    let n_long_removed = records.len() - timed.len();
    let stats = annotator_stats(&timed);
    let mut selection = filter_annotators(&stats, &config.rules);

    let mut diagnostics: Vec<Diagnostic> = selection
        .excluded
        .iter()
        .map(|(id, why)| Diagnostic::new(id, why))
        .collect();

    let retained_stats: BTreeMap<String, AnnotatorStats> = stats
        .iter()
        .filter(|(id, _)| selection.retained.contains(*id))
        .map(|(id, s)| (id.clone(), s.clone()))
        .collect();
    let (normalized, zero_var) = normalize_times(&timed, &retained_stats);
    for d in zero_var {
        selection.retained.remove(&d.subject);
        selection.excluded.insert(d.subject.clone(), Exclusion::ZeroVariance);
        diagnostics.push(d);
    }

    let all_images: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    let scored_images: BTreeSet<&str> = normalized.iter().map(|r| r.image_id.as_str()).collect();
    for img in all_images.difference(&scored_images) {
        diagnostics.push(Diagnostic::new(img, "no retained responses; no score emitted"));
    }

    let shift = geometric_shift(normalized.iter().map(|r| r.z));
    let mut scores = image_difficulty(&normalized, shift)?;
    for s in &mut scores {
        s.score = apply_wrong_answer_penalty(s.score, s.n_wrong, s.n_retained, config.penalty_weight)?;
    }
    diagnostics.sort();
    Ok(PipelineOutput {
        scores,
        shift,
        stats,
        selection,
        normalized,
        n_long_removed,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDifficulty {
    pub class: String,
    pub mean_score: f64,
    pub n_images: usize,
}

/// Mean score of the images containing each class, sorted from easiest to
/// hardest. Classes without scored images are omitted with a diagnostic.
pub fn per_class_difficulty(
    scores: &BTreeMap<String, f64>,
    image_classes: &BTreeMap<String, BTreeSet<String>>,
    classes: &[&str],
) -> (Vec<ClassDifficulty>, Vec<Diagnostic>) {
    let mut diagnostics = Vec::new();
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (image, present) in image_classes {
        let Some(&s) = scores.get(image) else {
            diagnostics.push(Diagnostic::new(image, "image has classes but no score"));
            continue;
        };
        for c in present {
            let e = sums.entry(c.as_str()).or_default();
            e.0 += s;
            e.1 += 1;
        }
    }
    let mut table = Vec::new();
    for &c in classes {
        match sums.get(c) {
            Some(&(sum, n)) => table.push(ClassDifficulty {
                class: String::from(c),
                mean_score: sum / n as f64,
                n_images: n,
            }),
            None => diagnostics.push(Diagnostic::new(c, "no scored image contains this class")),
        }
    }
    table.sort_by(|a, b| a.mean_score.total_cmp(&b.mean_score).then_with(|| a.class.cmp(&b.class)));
    (table, diagnostics)
}

/// One annotated object.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectBox {
    pub image_id: String,
    pub class: String,
    pub bbox: BBox,
    pub truncated: bool,
    pub occluded: bool,
    pub difficult: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageProperties {
    pub image_id: String,
    pub n_objects: usize,
    pub mean_area_fraction: f64,
    pub non_centeredness: f64,
    pub n_classes: usize,
    pub n_truncated: usize,
    pub n_occluded: usize,
    pub n_difficult: usize,
}

impl ImageProperties {
    /// Derives the properties of one image from its object boxes. `objects`
    /// must be non-empty.
    pub fn from_objects(image_id: &str, size: ImageSize, objects: &[&ObjectBox]) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::Empty("object boxes"));
        }
        if !(size.width > 0.0 && size.height > 0.0) {
            return Err(Error::param("image size", "width and height must be positive"));
        }
        let area = size.width * size.height;
        let (cx, cy) = (size.width / 2.0, size.height / 2.0);
        let n = objects.len() as f64;
        let mean_area_fraction = objects.iter().map(|o| o.bbox.area() / area).sum::<f64>() / n;
        let non_centeredness = objects
            .iter()
            .map(|o| {
                let (bx, by) = o.bbox.center();
                libm::hypot(bx - cx, by - cy)
            })
            .sum::<f64>()
            / n
            / libm::sqrt(area);
        let classes: BTreeSet<&str> = objects.iter().map(|o| o.class.as_str()).collect();
        Ok(Self {
            image_id: String::from(image_id),
            n_objects: objects.len(),
            mean_area_fraction,
            non_centeredness,
            n_classes: classes.len(),
            n_truncated: objects.iter().filter(|o| o.truncated).count(),
            n_occluded: objects.iter().filter(|o| o.occluded).count(),
            n_difficult: objects.iter().filter(|o| o.difficult).count(),
        })
    }
}

/// Groups boxes by image and derives properties for every image that has both
/// boxes and a size entry.
pub fn properties_from_metadata(
    boxes: &[ObjectBox],
    sizes: &BTreeMap<String, ImageSize>,
) -> (Vec<ImageProperties>, Vec<Diagnostic>) {
    let mut grouped: BTreeMap<&str, Vec<&ObjectBox>> = BTreeMap::new();
    for b in boxes {
        grouped.entry(&b.image_id).or_default().push(b);
    }
    let mut diagnostics = Vec::new();
    let mut out = Vec::new();
    for (image, objects) in &grouped {
        let Some(&size) = sizes.get(*image) else {
            diagnostics.push(Diagnostic::new(image, "boxes present but no image size"));
            continue;
        };
        match ImageProperties::from_objects(image, size, objects) {
            Ok(p) => out.push(p),
            Err(e) => diagnostics.push(Diagnostic::new(image, e)),
        }
    }
    for image in sizes.keys() {
        if !grouped.contains_key(image.as_str()) {
            diagnostics.push(Diagnostic::new(image, "no object boxes"));
        }
    }
    (out, diagnostics)
}

pub const PROPERTY_NAMES: [&str; 7] = [
    "n_objects",
    "mean_area_fraction",
    "non_centeredness",
    "n_classes",
    "n_truncated",
    "n_occluded",
    "n_difficult",
];

/// Seven aligned score columns, one per property, in [`PROPERTY_NAMES`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyScores {
    pub image_ids: Vec<String>,
    pub columns: [Vec<f64>; 7],
}

pub fn property_scores(props: &[ImageProperties]) -> PropertyScores {
    let mut columns: [Vec<f64>; 7] = Default::default();
    for p in props {
        let row = [
            p.n_objects as f64,
            p.mean_area_fraction,
            p.non_centeredness,
            p.n_classes as f64,
            p.n_truncated as f64,
            p.n_occluded as f64,
            p.n_difficult as f64,
        ];
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    PropertyScores {
        image_ids: props.iter().map(|p| p.image_id.clone()).collect(),
        columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn rec(annotator: &str, image: &str, pol: Polarity, ans: Answer, t: f64) -> ResponseRecord {
        ResponseRecord {
            annotator_id: annotator.into(),
            image_id: image.into(),
            question_class: "cat".into(),
            polarity: pol,
            answer: ans,
            response_time: t,
        }
    }

    fn correct(annotator: &str, image: &str, t: f64) -> ResponseRecord {
        rec(annotator, image, Polarity::Positive, Answer::Yes, t)
    }

    #[test]
    fn long_times_are_dropped_in_order() {
        let rs: Vec<_> = [1.0, 19.9, 20.1].iter().map(|&t| correct("a", "i", t)).collect();
        let kept: Vec<f64> = filter_long_times(&rs, 20.0).iter().map(|r| r.response_time).collect();
        assert_eq!(kept, vec![1.0, 19.9]);
        assert!(filter_long_times(&[], 20.0).is_empty());
        assert_eq!(filter_long_times(&rs[..2], 20.0), rs[..2].to_vec());
    }

    #[test]
    fn stats_use_sample_std_and_polarity_accuracy() {
        let rs = vec![
            correct("a", "i1", 2.0),
            correct("a", "i2", 4.0),
            rec("b", "i1", Polarity::Negative, Answer::No, 1.0),
            rec("b", "i2", Polarity::Negative, Answer::Yes, 1.0),
            rec("b", "i3", Polarity::Positive, Answer::Yes, 1.0),
            rec("b", "i4", Polarity::Positive, Answer::Yes, 1.0),
            correct("c", "i1", 3.0),
        ];
        let s = annotator_stats(&rs);
        assert_eq!((s["a"].mean_time, s["a"].std_time), (3.0, libm::sqrt(2.0)));
        assert_eq!(s["a"].accuracy, 1.0);
        assert_eq!(s["b"].accuracy, 0.75);
        assert!(s["c"].is_degenerate());
        assert_eq!(s["c"].std_time, 0.0);
    }

    #[test]
    fn sample_std_of_two_and_four_is_sqrt_two() {
        // Spread of {2, 4} with the n-1 denominator: sqrt(((−1)² + 1²) / 1).
        assert_eq!(sample_std(&[2.0, 4.0]), libm::sqrt(2.0));
    }

    fn stats(count: usize, mean: f64, accuracy: f64) -> AnnotatorStats {
        AnnotatorStats {
            annotator_id: "x".into(),
            count,
            mean_time: mean,
            std_time: 1.0,
            accuracy,
        }
    }

    #[test]
    fn annotator_rules() {
        let mut m = BTreeMap::new();
        m.insert(String::from("two"), stats(2, 3.0, 1.0));
        m.insert(String::from("sparse_slow"), stats(8, 12.0, 1.0));
        m.insert(String::from("busy_slow"), stats(50, 12.0, 1.0));
        m.insert(String::from("sloppy"), stats(50, 3.0, 0.85));
        m.insert(String::from("good"), stats(5, 4.0, 0.95));
        let sel = filter_annotators(&m, &AnnotatorRules::default());
        let kept: Vec<&str> = sel.retained.iter().map(|s| s.as_str()).collect();
        assert_eq!(kept, vec!["busy_slow", "good"]);
        assert_eq!(sel.excluded["two"], Exclusion::TooFewAnswers { count: 2 });
        assert!(matches!(sel.excluded["sparse_slow"], Exclusion::SparseAndSlow { .. }));
        assert!(matches!(sel.excluded["sloppy"], Exclusion::LowAccuracy { .. }));
    }

    #[test]
    fn normalization_examples() {
        let rs = vec![correct("a", "i1", 1.0), correct("a", "i2", 2.0), correct("a", "i3", 3.0)];
        let (z, diags) = normalize_times(&rs, &annotator_stats(&rs));
        assert!(diags.is_empty());
        assert_eq!(z.iter().map(|r| r.z).collect::<Vec<_>>(), vec![-1.0, 0.0, 1.0]);

        let flat = vec![correct("f", "i1", 2.0), correct("f", "i2", 2.0), correct("f", "i3", 2.0)];
        let (z, diags) = normalize_times(&flat, &annotator_stats(&flat));
        assert!(z.is_empty());
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn unit_spread_pair_normalizes_to_minus_one_plus_one() {
        let mut s = BTreeMap::new();
        s.insert(
            String::from("a"),
            AnnotatorStats {
                annotator_id: "a".into(),
                count: 2,
                mean_time: 3.0,
                std_time: 1.0,
                accuracy: 1.0,
            },
        );
        let (z, _) = normalize_times(&[correct("a", "i", 2.0), correct("a", "j", 4.0)], &s);
        assert_eq!(z.iter().map(|r| r.z).collect::<Vec<_>>(), vec![-1.0, 1.0]);
    }

    #[test]
    fn geometric_mean_examples() {
        for shift in [0.5, 1.0, 7.25] {
            assert_eq!(shifted_geometric_mean(&[0.3, 0.3, 0.3], shift).unwrap(), 0.3);
        }
        let v = shifted_geometric_mean(&[0.0, 0.5], 1.0).unwrap();
        assert!((v - (libm::sqrt(1.5) - 1.0)).abs() < 1e-15);
        assert!((v - 0.2247).abs() < 1e-4);
        assert!(shifted_geometric_mean(&[-2.0], 1.0).is_err());
        assert!(shifted_geometric_mean(&[], 1.0).is_err());
        assert_eq!(geometric_shift([-0.5, 2.0]), 1.5);
        assert_eq!(geometric_shift([0.5, 2.0]), 1.0);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(apply_wrong_answer_penalty(1.0, 0, 6, 0.5).unwrap(), 1.0);
        assert_eq!(apply_wrong_answer_penalty(1.0, 3, 6, 0.5).unwrap(), 1.25);
        assert_eq!(apply_wrong_answer_penalty(1.0, 6, 6, 0.5).unwrap(), 1.5);
        assert!(apply_wrong_answer_penalty(1.0, 0, 0, 0.5).is_err());
    }

    #[test]
    fn class_means_sorted_ascending_with_missing_classes_reported() {
        let mut scores = BTreeMap::new();
        scores.insert(String::from("i1"), 2.0);
        scores.insert(String::from("i2"), 4.0);
        scores.insert(String::from("i3"), 1.0);
        let mut classes = BTreeMap::new();
        classes.insert(String::from("i1"), BTreeSet::from([String::from("cat")]));
        classes.insert(String::from("i2"), BTreeSet::from([String::from("cat")]));
        classes.insert(String::from("i3"), BTreeSet::from([String::from("bird")]));
        let (table, diags) = per_class_difficulty(&scores, &classes, &["cat", "bird", "sofa"]);
        assert_eq!(table[0].class, "bird");
        assert_eq!(table[0].mean_score, 1.0);
        assert_eq!(table[1].mean_score, 3.0);
        assert_eq!(diags, vec![Diagnostic::new("sofa", "no scored image contains this class")]);
    }

    fn obj(image: &str, class: &str, b: (f64, f64, f64, f64)) -> ObjectBox {
        ObjectBox {
            image_id: image.into(),
            class: class.into(),
            bbox: BBox::new(b.0, b.1, b.2, b.3).unwrap(),
            truncated: false,
            occluded: true,
            difficult: false,
        }
    }

    #[test]
    fn property_examples() {
        let size = ImageSize {
            width: 10.0,
            height: 10.0,
        };
        let whole = obj("i", "cat", (0.0, 0.0, 10.0, 10.0));
        let p = ImageProperties::from_objects("i", size, &[&whole]).unwrap();
        assert_eq!((p.non_centeredness, p.mean_area_fraction), (0.0, 1.0));

        let a = obj("j", "cat", (0.0, 0.0, 2.0, 10.0));
        let b = obj("j", "dog", (0.0, 0.0, 4.0, 10.0));
        let p = ImageProperties::from_objects("j", size, &[&a, &b]).unwrap();
        assert!((p.mean_area_fraction - 0.3).abs() < 1e-12);
        assert_eq!((p.n_objects, p.n_classes, p.n_occluded), (2, 2, 2));
        // Centers (1,5) and (2,5) against (5,5): distances 4 and 3, over sqrt(100).
        assert!((p.non_centeredness - 0.35).abs() < 1e-12);
    }

    #[test]
    fn metadata_gaps_are_diagnosed() {
        let mut sizes = BTreeMap::new();
        sizes.insert(String::from("i"), ImageSize { width: 4.0, height: 4.0 });
        sizes.insert(String::from("empty"), ImageSize { width: 4.0, height: 4.0 });
        let boxes = vec![obj("i", "cat", (0.0, 0.0, 1.0, 1.0)), obj("nosize", "cat", (0.0, 0.0, 1.0, 1.0))];
        let (props, diags) = properties_from_metadata(&boxes, &sizes);
        assert_eq!(props.len(), 1);
        assert_eq!(diags.len(), 2);
        let cols = property_scores(&props);
        assert_eq!(cols.columns[0], vec![1.0]);
    }

    fn fixture_log(times: &[(usize, usize, f64, bool)]) -> Vec<ResponseRecord> {
        times
            .iter()
            .map(|&(a, i, t, ok)| {
                let ans = if ok { Answer::Yes } else { Answer::No };
                rec(&format!("a{a}"), &format!("img{i}"), Polarity::Positive, ans, t)
            })
            .collect()
    }

    #[test]
    fn pipeline_penalizes_wrong_answers() {
        let mut rows = Vec::new();
        for a in 0..3 {
            for i in 0..12 {
                rows.push((a, i, 1.0 + ((a * 7 + i * 3) % 5) as f64, !(a == 0 && i == 4)));
            }
        }
        let log = fixture_log(&rows);
        let out = score_images(&log, &PipelineConfig::default()).unwrap();
        let img4 = out.scores.iter().find(|s| s.image_id == "img4").unwrap();
        assert_eq!(img4.n_wrong, 1);
        let unpenalized = image_difficulty(&out.normalized, out.shift).unwrap();
        let raw4 = unpenalized.iter().find(|s| s.image_id == "img4").unwrap();
        assert!((img4.score - raw4.score - 0.5 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn difficulty_is_permutation_invariant_and_monotone(
            z in proptest::collection::vec(-3.0f64..3.0, 1..12),
            rot in 0usize..12,
            bump_at in 0usize..12,
        ) {
            let shift = geometric_shift(z.iter().copied()) + 0.5;
            let mut rotated = z.clone();
            let n = rotated.len();
            rotated.rotate_left(rot % n);
            let base = shifted_geometric_mean(&z, shift).unwrap();
            prop_assert_eq!(base, shifted_geometric_mean(&rotated, shift).unwrap());
            let mut bumped = z.clone();
            bumped[bump_at % n] += 0.25;
            prop_assert!(shifted_geometric_mean(&bumped, shift).unwrap() > base);
        }

        #[test]
        fn filters_are_idempotent(times in proptest::collection::vec(0.1f64..30.0, 0..40)) {
            let log: Vec<_> = times
                .iter()
                .enumerate()
                .map(|(i, &t)| correct(&format!("a{}", i % 4), &format!("i{i}"), t))
                .collect();
            let once = filter_long_times(&log, 20.0);
            prop_assert_eq!(filter_long_times(&once, 20.0), once.clone());

            let stats = annotator_stats(&once);
            let sel = filter_annotators(&stats, &AnnotatorRules::default());
            let kept: BTreeMap<String, AnnotatorStats> = stats
                .into_iter()
                .filter(|(id, _)| sel.retained.contains(id))
                .collect();
            let again = filter_annotators(&kept, &AnnotatorRules::default());
            prop_assert_eq!(again.retained, sel.retained);
        }

        #[test]
        fn wrong_answers_raise_scores(score in -2.0f64..2.0, wrong in 0usize..6, weight in 0.01f64..2.0) {
            let a = apply_wrong_answer_penalty(score, wrong, 6, weight).unwrap();
            let b = apply_wrong_answer_penalty(score, wrong + 1, 6, weight).unwrap();
            prop_assert!(b > a);
        }
    }
}
