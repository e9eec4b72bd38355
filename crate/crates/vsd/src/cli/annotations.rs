use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Context as _};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use vsd_core::anno::{
    per_class_difficulty, properties_from_metadata, property_scores, score_images, AnnotatorRules, PipelineConfig,
    PROPERTY_NAMES, VOC_CLASSES,
};
use vsd_core::metrics::kendall_tau;
use vsd_core::splits::{make_splits, SplitSpec};
use vsd_core::Diagnostic;

use super::predictors::{combination_tau, TauRow, TAU_HEADER};
use super::Ctx;
use crate::tables::{self, ScoreRow};
use crate::voc;

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Annotation log (annotator_id,image_id,question_class,question_polarity,answer,response_time_s).
    #[arg(long)]
    pub log: PathBuf,
    /// Drop responses slower than this many seconds.
    #[arg(long, default_value_t = 20.0)]
    pub max_time: f64,
    /// Added to an image's score times its fraction of wrong answers.
    #[arg(long, default_value_t = 0.5)]
    pub penalty: f64,
    #[arg(long, default_value_t = 0.9)]
    pub min_accuracy: f64,
    #[arg(long, default_value_t = 3)]
    pub min_count: usize,
    /// Annotators with fewer answers than this are dropped when slow.
    #[arg(long, default_value_t = 10)]
    pub sparse_count: usize,
    #[arg(long, default_value_t = 10.0)]
    pub slow_mean_time: f64,
    /// Box table; when given, per-class mean difficulty is written too.
    #[arg(long)]
    pub boxes: Option<PathBuf>,
}

#[derive(Serialize)]
struct AnnotatorRow<'a> {
    annotator_id: &'a str,
    count: usize,
    mean_time: f64,
    std_time: f64,
    accuracy: f64,
    retained: u8,
    reason: String,
}

pub fn process(ctx: &mut Ctx, a: &ProcessArgs) -> anyhow::Result<()> {
    let (records, rejected) = tables::read_annotation_log(&a.log)?;
    ctx.input(&a.log)?;
    let config = PipelineConfig {
        max_time: a.max_time,
        rules: AnnotatorRules {
            min_accuracy: a.min_accuracy,
            min_count: a.min_count,
            sparse_count: a.sparse_count,
            slow_mean_time: a.slow_mean_time,
        },
        penalty_weight: a.penalty,
    };
    let out = score_images(&records, &config)?;
    for d in &rejected {
        ctx.warn(d.into());
    }
    for d in &out.diagnostics {
        ctx.warn(d.clone());
    }

    ctx.write_rows(
        "scores.csv",
        &["image_id", "score", "n_retained", "n_wrong"],
        out.scores.iter().map(|s| ScoreRow {
            image_id: s.image_id.clone(),
            score: s.score,
            n_retained: s.n_retained,
            n_wrong: s.n_wrong,
        }),
    )?;
    let rows: Vec<AnnotatorRow<'_>> = out
        .stats
        .values()
        .map(|s| AnnotatorRow {
            annotator_id: &s.annotator_id,
            count: s.count,
            mean_time: s.mean_time,
            std_time: s.std_time,
            accuracy: s.accuracy,
            retained: u8::from(out.selection.retained.contains(&s.annotator_id)),
            reason: out
                .selection
                .excluded
                .get(&s.annotator_id)
                .map(|r| r.to_string())
                .unwrap_or_default(),
        })
        .collect();
    ctx.write_rows(
        "annotators.csv",
        &["annotator_id", "count", "mean_time", "std_time", "accuracy", "retained", "reason"],
        rows,
    )?;

    if let Some(boxes) = &a.boxes {
        let classes = tables::image_classes(&tables::read_boxes(boxes)?);
        ctx.input(boxes)?;
        let scores: BTreeMap<String, f64> = out.scores.iter().map(|s| (s.image_id.clone(), s.score)).collect();
        let scored: BTreeMap<String, BTreeSet<String>> =
            classes.into_iter().filter(|(id, _)| scores.contains_key(id)).collect();
        let (table, diags) = per_class_difficulty(&scores, &scored, &VOC_CLASSES);
        ctx.diagnostics.extend(diags);
        ctx.write_rows(
            "per_class.csv",
            &["class", "mean_score", "n_images"],
            table.iter().map(|c| (&c.class, c.mean_score, c.n_images)),
        )?;
    }

    ctx.manifest
        .param("max_time", a.max_time)
        .param("penalty_weight", a.penalty)
        .param("min_accuracy", a.min_accuracy)
        .param("min_count", a.min_count)
        .param("sparse_count", a.sparse_count)
        .param("slow_mean_time", a.slow_mean_time)
        .result("shift", out.shift)
        .result("n_records", records.len())
        .result("n_rejected_rows", rejected.len())
        .result("n_long_removed", out.n_long_removed)
        .result("n_annotators", out.stats.len())
        .result("n_annotators_retained", out.selection.retained.len())
        .result("n_images_scored", out.scores.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PropertiesArgs {
    #[arg(long)]
    pub boxes: PathBuf,
    /// Image sizes (image_id,width,height).
    #[arg(long)]
    pub sizes: PathBuf,
    /// Ground-truth difficulty; enables the correlation table.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

pub fn properties(ctx: &mut Ctx, a: &PropertiesArgs) -> anyhow::Result<()> {
    let boxes = tables::read_boxes(&a.boxes)?;
    let sizes = tables::read_sizes(&a.sizes)?;
    ctx.input(&a.boxes)?;
    ctx.input(&a.sizes)?;
    let (props, diags) = properties_from_metadata(&boxes, &sizes);
    ctx.diagnostics.extend(diags);
    let table = property_scores(&props);
    let mut header = vec!["image_id"];
    header.extend(PROPERTY_NAMES);
    let rows = (0..table.image_ids.len()).map(|i| {
        let mut r = vec![table.image_ids[i].clone()];
        r.extend(table.columns.iter().map(|c| c[i].to_string()));
        r
    });
    ctx.write_rows("properties.csv", &header, rows)?;

    if let Some(scores_path) = &a.scores {
        let scores = tables::read_scores(scores_path)?;
        ctx.input(scores_path)?;
        let keep: Vec<usize> = (0..table.image_ids.len())
            .filter(|&i| scores.contains_key(&table.image_ids[i]))
            .collect();
        if keep.len() < 4 {
            bail!("only {} images have both properties and scores", keep.len());
        }
        let ids: Vec<String> = keep.iter().map(|&i| table.image_ids[i].clone()).collect();
        let y: Vec<f64> = ids.iter().map(|id| scores[id]).collect();
        let columns: Vec<Vec<f64>> = table.columns.iter().map(|c| keep.iter().map(|&i| c[i]).collect()).collect();
        let mut rows = Vec::new();
        for (name, col) in PROPERTY_NAMES.iter().zip(&columns) {
            match kendall_tau(col, &y) {
                Ok(t) => rows.push(TauRow::new(name, t.tau, ids.len())),
                Err(e) => ctx.warn(Diagnostic::new(name, e)),
            }
        }
        let named: Vec<(&str, &[f64])> = PROPERTY_NAMES.iter().copied().zip(columns.iter().map(Vec::as_slice)).collect();
        let (row, diags) = combination_tau(&ids, &named, &y, ctx.seed)?;
        ctx.diagnostics.extend(diags);
        rows.push(row);
        ctx.write_rows("property_tau.csv", &TAU_HEADER, rows)?;
    }
    ctx.manifest.result("n_images", table.image_ids.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Directory of VOC `*.xml` annotation files.
    #[arg(long)]
    pub voc_dir: PathBuf,
}

pub fn convert(ctx: &mut Ctx, a: &ConvertArgs) -> anyhow::Result<()> {
    let (boxes, sizes) = voc::convert_dir(&a.voc_dir)?;
    tables::write_boxes(&ctx.out("boxes.csv"), &boxes)?;
    ctx.wrote("boxes.csv")?;
    tables::write_sizes(&ctx.out("sizes.csv"), &sizes)?;
    ctx.wrote("sizes.csv")?;
    ctx.manifest
        .param("voc_dir", a.voc_dir.display().to_string())
        .result("n_images", sizes.len())
        .result("n_boxes", boxes.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitKind {
    /// 50% train, 25% validation, 25% test.
    Random,
    ClassDisjoint,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Any table with an `image_id` column; repeated ids are collapsed.
    #[arg(long)]
    pub ids: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitKind::Random)]
    pub kind: SplitKind,
    /// Box table giving each image's classes (class-disjoint only).
    #[arg(long)]
    pub boxes: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub train_classes: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub test_classes: Vec<String>,
}

#[derive(Deserialize)]
struct IdOnly {
    image_id: String,
}

pub fn split(ctx: &mut Ctx, a: &SplitArgs) -> anyhow::Result<()> {
    let rows: Vec<IdOnly> = tables::read_rows(&a.ids)?;
    ctx.input(&a.ids)?;
    let ids: Vec<String> = rows.into_iter().map(|r| r.image_id).collect::<BTreeSet<_>>().into_iter().collect();
    let (spec, classes) = match a.kind {
        SplitKind::Random => (SplitSpec::Random { seed: ctx.seed }, BTreeMap::new()),
        SplitKind::ClassDisjoint => {
            let boxes = a.boxes.as_ref().context("--boxes is required for a class-disjoint split")?;
            let classes = tables::image_classes(&tables::read_boxes(boxes)?);
            ctx.input(boxes)?;
            if a.train_classes.is_empty() || a.test_classes.is_empty() {
                bail!("--train-classes and --test-classes are required for a class-disjoint split");
            }
            (
                SplitSpec::ClassDisjoint {
                    seed: ctx.seed,
                    train_classes: a.train_classes.iter().cloned().collect(),
                    test_classes: a.test_classes.iter().cloned().collect(),
                },
                classes,
            )
        }
    };
    let s = make_splits(&ids, &classes, &spec)?;
    tables::write_splits(&ctx.out("splits.csv"), &s)?;
    ctx.wrote("splits.csv")?;
    ctx.manifest
        .param("kind", format!("{:?}", a.kind).to_lowercase())
        .param("train_classes", &a.train_classes)
        .param("test_classes", &a.test_classes)
        .result("n_train", s.train.len())
        .result("n_val", s.val.len())
        .result("n_test", s.test.len())
        .result("n_excluded", s.excluded.len());
    Ok(())
}

