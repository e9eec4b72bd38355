//! Comma-separated tables read and written by the pipelines.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use vsd_core::anno::{Answer, ImageSize, ObjectBox, Polarity, ResponseRecord, VOC_CLASSES};
use vsd_core::metrics::BBox;
use vsd_core::Diagnostic;

use crate::error::{Error, Result};

pub const ANNOTATION_COLUMNS: [&str; 6] = [
    "annotator_id",
    "image_id",
    "question_class",
    "question_polarity",
    "answer",
    "response_time_s",
];

/// A rejected input row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: u64,
    pub message: String,
}

impl From<&LineDiagnostic> for Diagnostic {
    fn from(d: &LineDiagnostic) -> Self {
        Diagnostic::new(format!("line {}", d.line), &d.message)
    }
}

fn parse_row(fields: &[&str]) -> std::result::Result<ResponseRecord, String> {
    let [annotator, image, class, polarity, answer, time] = fields else {
        return Err(format!("expected {} fields, found {}", ANNOTATION_COLUMNS.len(), fields.len()));
    };
    for (name, v) in ANNOTATION_COLUMNS.iter().zip(fields) {
        if v.is_empty() {
            return Err(format!("missing field `{name}`"));
        }
    }
    if !VOC_CLASSES.contains(class) {
        return Err(format!("unknown class `{class}`"));
    }
    let polarity = match polarity.to_ascii_lowercase().as_str() {
        "positive" => Polarity::Positive,
        "negative" => Polarity::Negative,
        other => return Err(format!("polarity `{other}` is neither positive nor negative")),
    };
    let answer = match answer.to_ascii_lowercase().as_str() {
        "yes" => Answer::Yes,
        "no" => Answer::No,
        other => return Err(format!("answer `{other}` is neither yes nor no")),
    };
    let response_time: f64 = time.parse().map_err(|_| format!("response time `{time}` is not a number"))?;
    if !(response_time.is_finite() && response_time > 0.0) {
        return Err(format!("response time {time} must be positive"));
    }
    Ok(ResponseRecord {
        annotator_id: annotator.to_string(),
        image_id: image.to_string(),
        question_class: class.to_string(),
        polarity,
        answer,
        response_time,
    })
}

/// Parses an annotation log. A missing header column is fatal; bad data rows
/// are skipped and reported by line number.
pub fn parse_annotation_log<R: Read>(reader: R, file: &str) -> Result<(Vec<ResponseRecord>, Vec<LineDiagnostic>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(file, e))?.clone();
    let mut index = [0usize; 6];
    for (slot, column) in index.iter_mut().zip(ANNOTATION_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == column)
            .ok_or(Error::MissingColumn {
                file: file.into(),
                column,
            })?;
    }
    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                diagnostics.push(LineDiagnostic {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        if row.iter().all(str::is_empty) {
            continue;
        }
        let fields: Vec<&str> = if row.len() == headers.len() {
            index.iter().map(|&i| &row[i]).collect()
        } else {
            row.iter().collect()
        };
        match parse_row(&fields) {
            Ok(r) => records.push(r),
            Err(message) => diagnostics.push(LineDiagnostic { line, message }),
        }
    }
    Ok((records, diagnostics))
}

pub fn read_annotation_log(path: &Path) -> Result<(Vec<ResponseRecord>, Vec<LineDiagnostic>)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_annotation_log(f, &path.display().to_string())
}

pub fn write_annotation_log(path: &Path, records: &[ResponseRecord]) -> Result<()> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(&name, e))?;
    w.write_record(ANNOTATION_COLUMNS).map_err(|e| Error::csv(&name, e))?;
    for r in records {
        let polarity = match r.polarity {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
        };
        let answer = match r.answer {
            Answer::Yes => "yes",
            Answer::No => "no",
        };
        let time = r.response_time.to_string();
        w.write_record([&r.annotator_id, &r.image_id, &r.question_class, polarity, answer, &time])
            .map_err(|e| Error::csv(&name, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let name = path.display().to_string();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(&name, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(&name, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes rows, emitting `header` even when there are none.
pub fn write_rows_with_header<T: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<()> {
    let name = path.display().to_string();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| Error::csv(&name, e))?;
    w.write_record(header).map_err(|e| Error::csv(&name, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(&name, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let name = path.display().to_string();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Row {
                file: name.clone(),
                line,
                message: e.to_string(),
            }
        })?);
    }
    Ok(out)
}

fn ser_flag<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

fn de_flag<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    let s = String::deserialize(d)?;
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" | "" => Ok(false),
        other => Err(serde::de::Error::custom(format!("`{other}` is not a 0/1 flag"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub subject: String,
    pub message: String,
}

impl From<&Diagnostic> for DiagnosticRow {
    fn from(d: &Diagnostic) -> Self {
        Self {
            subject: d.subject.clone(),
            message: d.message.clone(),
        }
    }
}

pub fn write_diagnostics(path: &Path, diagnostics: &[Diagnostic]) -> Result<()> {
    write_rows_with_header(path, &["subject", "message"], diagnostics.iter().map(DiagnosticRow::from))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub image_id: String,
    pub score: f64,
    pub n_retained: usize,
    pub n_wrong: usize,
}

/// Any table with `image_id` and `score` columns: ground-truth scores,
/// predictions, baseline columns renamed by the caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdScore {
    pub image_id: String,
    pub score: f64,
}

/// Reads `image_id,score` pairs, rejecting duplicate ids and non-finite
/// scores.
pub fn read_scores(path: &Path) -> Result<BTreeMap<String, f64>> {
    let rows: Vec<IdScore> = read_rows(path)?;
    let mut out = BTreeMap::new();
    for (i, r) in rows.into_iter().enumerate() {
        let line = i as u64 + 2;
        if !r.score.is_finite() {
            return Err(Error::Row {
                file: path.display().to_string(),
                line,
                message: format!("score for `{}` is not finite", r.image_id),
            });
        }
        if out.insert(r.image_id.clone(), r.score).is_some() {
            return Err(Error::Row {
                file: path.display().to_string(),
                line,
                message: format!("duplicate image id `{}`", r.image_id),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRow {
    pub image_id: String,
    pub class: String,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
    #[serde(serialize_with = "ser_flag", deserialize_with = "de_flag")]
    pub truncated: bool,
    #[serde(serialize_with = "ser_flag", deserialize_with = "de_flag")]
    pub occluded: bool,
    #[serde(serialize_with = "ser_flag", deserialize_with = "de_flag")]
    pub difficult: bool,
}

impl From<&ObjectBox> for BoxRow {
    fn from(b: &ObjectBox) -> Self {
        Self {
            image_id: b.image_id.clone(),
            class: b.class.clone(),
            xmin: b.bbox.xmin,
            ymin: b.bbox.ymin,
            xmax: b.bbox.xmax,
            ymax: b.bbox.ymax,
            truncated: b.truncated,
            occluded: b.occluded,
            difficult: b.difficult,
        }
    }
}

pub fn read_boxes(path: &Path) -> Result<Vec<ObjectBox>> {
    let rows: Vec<BoxRow> = read_rows(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let bbox = BBox::new(r.xmin, r.ymin, r.xmax, r.ymax).map_err(|e| Error::Row {
                file: path.display().to_string(),
                line: i as u64 + 2,
                message: e.to_string(),
            })?;
            Ok(ObjectBox {
                image_id: r.image_id,
                class: r.class,
                bbox,
                truncated: r.truncated,
                occluded: r.occluded,
                difficult: r.difficult,
            })
        })
        .collect()
}

pub fn write_boxes(path: &Path, boxes: &[ObjectBox]) -> Result<()> {
    write_rows_with_header(
        path,
        &["image_id", "class", "xmin", "ymin", "xmax", "ymax", "truncated", "occluded", "difficult"],
        boxes.iter().map(BoxRow::from),
    )
}

/// Classes present in each image.
pub fn image_classes(boxes: &[ObjectBox]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for b in boxes {
        out.entry(b.image_id.clone()).or_default().insert(b.class.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
}

pub fn read_sizes(path: &Path) -> Result<BTreeMap<String, ImageSize>> {
    let rows: Vec<SizeRow> = read_rows(path)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            (
                r.image_id,
                ImageSize {
                    width: r.width,
                    height: r.height,
                },
            )
        })
        .collect())
}

pub fn write_sizes(path: &Path, sizes: &BTreeMap<String, ImageSize>) -> Result<()> {
    write_rows_with_header(
        path,
        &["image_id", "width", "height"],
        sizes.iter().map(|(id, s)| SizeRow {
            image_id: id.clone(),
            width: s.width,
            height: s.height,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub image_id: String,
    pub area: f64,
    pub filesize: f64,
    pub edge_density: f64,
    pub n_segments: usize,
}

/// One candidate window of a MIL bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub image_id: String,
    pub window_index: usize,
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BagLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagRow {
    pub image_id: String,
    pub label: BagLabel,
    pub difficulty: f64,
    pub window_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRow {
    pub image_id: String,
    pub split: SplitName,
}

pub fn read_splits(path: &Path) -> Result<vsd_core::splits::Splits> {
    let rows: Vec<SplitRow> = read_rows(path)?;
    let mut s = vsd_core::splits::Splits::default();
    let mut seen = BTreeSet::new();
    for r in rows {
        if !seen.insert(r.image_id.clone()) {
            return Err(Error::Invalid(format!("{}: `{}` listed twice", path.display(), r.image_id)));
        }
        match r.split {
            SplitName::Train => s.train.push(r.image_id),
            SplitName::Val => s.val.push(r.image_id),
            SplitName::Test => s.test.push(r.image_id),
            SplitName::Excluded => s.excluded.push(r.image_id),
        }
    }
    for v in [&mut s.train, &mut s.val, &mut s.test, &mut s.excluded] {
        v.sort();
    }
    Ok(s)
}

pub fn write_splits(path: &Path, s: &vsd_core::splits::Splits) -> Result<()> {
    let mut rows: Vec<SplitRow> = Vec::new();
    for (name, ids) in [
        (SplitName::Train, &s.train),
        (SplitName::Val, &s.val),
        (SplitName::Test, &s.test),
        (SplitName::Excluded, &s.excluded),
    ] {
        rows.extend(ids.iter().map(|id| SplitRow {
            image_id: id.clone(),
            split: name,
        }));
    }
    rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    write_rows_with_header(path, &["image_id", "split"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = "\
annotator_id,image_id,question_class,question_polarity,answer,response_time_s
a1,img7,cat,positive,yes,2.4
a1,img8,dog,negative,no,1.5
a2,img7,cat,positive,no,-1.0
a2,img9,bird,positive,yes,3.25
a3,img9,bird,negative,yes,0.8
";

    #[test]
    fn row_maps_directly_to_a_record() {
        let (records, diags) = parse_annotation_log(LOG.as_bytes(), "log").unwrap();
        assert_eq!(
            records[0],
            ResponseRecord {
                annotator_id: "a1".into(),
                image_id: "img7".into(),
                question_class: "cat".into(),
                polarity: Polarity::Positive,
                answer: Answer::Yes,
                response_time: 2.4,
            }
        );
        assert_eq!(records.len(), 4);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 4);
        assert!(diags[0].message.contains("positive"), "{}", diags[0].message);
    }

    #[test]
    fn six_lines_one_malformed() {
        let text = "\
annotator_id,image_id,question_class,question_polarity,answer,response_time_s
a,i1,cat,positive,yes,1
a,i2,cat,positive,yes,2
a,i3,cat,positive
a,i4,cat,negative,no,3
a,i5,cat,negative,no,4
a,i6,cat,negative,no,5
";
        let (records, diags) = parse_annotation_log(text.as_bytes(), "log").unwrap();
        assert_eq!((records.len(), diags.len()), (5, 1));
        assert_eq!(diags[0].line, 4);
    }

    #[test]
    fn missing_header_column_is_fatal() {
        let text = "annotator_id,image_id,question_class,answer,response_time_s\n";
        assert!(matches!(
            parse_annotation_log(text.as_bytes(), "log"),
            Err(Error::MissingColumn {
                column: "question_polarity",
                ..
            })
        ));
    }

    #[test]
    fn columns_may_be_reordered() {
        let text = "response_time_s,answer,question_polarity,question_class,image_id,annotator_id\n1.5,no,negative,cow,x,b\n";
        let (records, _) = parse_annotation_log(text.as_bytes(), "log").unwrap();
        assert_eq!(records[0].annotator_id, "b");
        assert_eq!(records[0].response_time, 1.5);
    }

    #[test]
    fn log_round_trips_through_the_writer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let (records, _) = parse_annotation_log(LOG.as_bytes(), "log").unwrap();
        write_annotation_log(&path, &records).unwrap();
        let (back, diags) = read_annotation_log(&path).unwrap();
        assert_eq!(back, records);
        assert!(diags.is_empty());
    }

    #[test]
    fn box_flags_accept_words_and_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("boxes.csv");
        std::fs::write(
            &path,
            "image_id,class,xmin,ymin,xmax,ymax,truncated,occluded,difficult\ni,cat,0,0,10,10,1,false,0\n",
        )
        .unwrap();
        let boxes = read_boxes(&path).unwrap();
        assert!(boxes[0].truncated && !boxes[0].occluded);
        write_boxes(&path, &boxes).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().ends_with("i,cat,0.0,0.0,10.0,10.0,1,0,0\n"));
    }

    #[test]
    fn duplicate_scores_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, "image_id,score\na,1\na,2\n").unwrap();
        assert!(matches!(read_scores(&path), Err(Error::Row { line: 3, .. })));
    }
}
