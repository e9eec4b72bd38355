use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use vsd_core::features::{validate_layout, FeatureLayout, FeatureMatrix};
use vsd_core::imaging::{area_score, edge_density, filesize_score, segment, EdgeOptions, SegmentParams};
use vsd_core::metrics::{kendall_tau, mse, pair_accuracy};
use vsd_core::regression::{
    check_disjoint, combine_predictors, evaluate_point, finish, select_best, CombineParams, Dataset, Grid, GridPoint,
    GridPointResult, NuSvrParams,
};
use vsd_core::splits::{make_splits, SplitSpec, Splits};
use vsd_core::Diagnostic;

use super::Ctx;
use crate::model_io;
use crate::pnm;
use crate::tables::{self, BaselineRow, IdScore, SplitName};
use crate::vsdf;

/// Rank correlation of one predictor with ground truth.
#[derive(Debug, Clone, Serialize)]
pub struct TauRow {
    pub predictor: String,
    pub tau: f64,
    pub pair_accuracy: f64,
    pub n: usize,
}

impl TauRow {
    pub fn new(predictor: &str, tau: f64, n: usize) -> Self {
        Self {
            predictor: predictor.into(),
            tau,
            pair_accuracy: pair_accuracy(tau),
            n,
        }
    }
}

pub const TAU_HEADER: [&str; 4] = ["predictor", "tau", "pair_accuracy", "n"];

/// Combines score columns with ν-SVR: fit on a seeded 50/25/25 split's
/// training part, pick C and ν by validation τ, report τ on the test part.
pub fn combination_tau(
    ids: &[String],
    columns: &[(&str, &[f64])],
    targets: &[f64],
    seed: u64,
) -> anyhow::Result<(TauRow, Vec<Diagnostic>)> {
    let splits = make_splits(ids, &BTreeMap::new(), &SplitSpec::Random { seed })?;
    let pos: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let take = |set: &[String]| -> (Vec<Vec<f64>>, Vec<f64>) {
        let idx: Vec<usize> = set.iter().map(|id| pos[id.as_str()]).collect();
        let cols = columns.iter().map(|(_, c)| idx.iter().map(|&i| c[i]).collect()).collect();
        (cols, idx.iter().map(|&i| targets[i]).collect())
    };
    let (train_cols, train_y) = take(&splits.train);
    let (val_cols, val_y) = take(&splits.val);
    let (test_cols, test_y) = take(&splits.test);
    let named = |cols: &[Vec<f64>]| -> Vec<(&str, Vec<f64>)> {
        columns.iter().zip(cols).map(|((n, _), c)| (*n, c.clone())).collect()
    };
    let as_rows = |cols: &[Vec<f64>], n: usize| -> Vec<Vec<f64>> { (0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect() };
    let train_named = named(&train_cols);
    let train_refs: Vec<(&str, &[f64])> = train_named.iter().map(|(n, c)| (*n, c.as_slice())).collect();
    let val_rows = as_rows(&val_cols, val_y.len());

    let points = Grid::default_nu_svr().points();
    let fitted: Vec<_> = points
        .par_iter()
        .map(|p| {
            let GridPoint::NuSvr { c, nu } = *p else { unreachable!("ν-SVR grid") };
            let params = CombineParams {
                svr: NuSvrParams::new(c, nu),
            };
            let fit = combine_predictors(&train_refs, &train_y, &params);
            let result = match &fit {
                Ok((model, _)) => match model.predict(&val_rows).and_then(|p| Ok((kendall_tau(&p, &val_y)?.tau, mse(&p, &val_y)?))) {
                    Ok((tau, m)) => GridPointResult {
                        point: *p,
                        tau: Some(tau),
                        mse: Some(m),
                        error: None,
                    },
                    Err(e) => GridPointResult {
                        point: *p,
                        tau: None,
                        mse: None,
                        error: Some(e.to_string()),
                    },
                },
                Err(e) => GridPointResult {
                    point: *p,
                    tau: None,
                    mse: None,
                    error: Some(e.to_string()),
                },
            };
            (result, fit.ok())
        })
        .collect();
    let results: Vec<GridPointResult> = fitted.iter().map(|(r, _)| r.clone()).collect();
    let best = select_best(&results).context("no combination grid point could be fitted")?;
    let (model, diags) = fitted[best].1.clone().context("selected combination has no model")?;
    let pred = model.predict(&as_rows(&test_cols, test_y.len()))?;
    let tau = kendall_tau(&pred, &test_y)?.tau;
    Ok((TauRow::new("combination (nu-svr)", tau, test_y.len()), diags))
}

#[derive(Debug, Args)]
pub struct BaselinesArgs {
    /// Directory of PNM images; the file stem is the image id.
    #[arg(long)]
    pub images: PathBuf,
    /// Directory holding the original compressed files, matched by stem, for the file-size score.
    #[arg(long)]
    pub originals: Option<PathBuf>,
    #[arg(long, default_value_t = 500.0)]
    pub k: f64,
    #[arg(long, default_value_t = 20)]
    pub min_size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    /// Divide the edge sum by the pixel count.
    #[arg(long)]
    pub edge_normalize: bool,
    /// Ground-truth difficulty; enables the correlation table.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

fn files_by_stem(dir: &Path, exts: Option<&[&str]>) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            exts.is_none_or(|exts| {
                p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| exts.contains(&x.to_ascii_lowercase().as_str()))
            })
        })
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
            out.entry(stem.to_string()).or_insert(p);
        }
    }
    Ok(out)
}

pub fn baselines(ctx: &mut Ctx, a: &BaselinesArgs) -> anyhow::Result<()> {
    let images = files_by_stem(&a.images, Some(&["ppm", "pgm", "pnm", "pbm"]))?;
    if images.is_empty() {
        bail!("no PNM images in {}", a.images.display());
    }
    let originals = match &a.originals {
        Some(d) => files_by_stem(d, None)?,
        None => BTreeMap::new(),
    };
    let params = SegmentParams {
        k: a.k,
        min_size: a.min_size,
        sigma: a.sigma,
    };
    let edge = EdgeOptions {
        normalize: a.edge_normalize,
        ..EdgeOptions::default()
    };
    let entries: Vec<(&String, &PathBuf)> = images.iter().collect();
    let rows = entries
        .par_iter()
        .map(|(id, path)| -> anyhow::Result<BaselineRow> {
            let img = pnm::read_pnm(path)?;
            let sized = originals.get(*id).unwrap_or(path);
            let bytes = std::fs::metadata(sized).with_context(|| format!("reading {}", sized.display()))?.len();
            Ok(BaselineRow {
                image_id: (*id).clone(),
                area: area_score(&img),
                filesize: filesize_score(bytes),
                edge_density: edge_density(&img, &edge),
                n_segments: segment(&img, &params)?.n_segments,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    for (id, path) in &images {
        ctx.input(path)?;
        if a.originals.is_some() && !originals.contains_key(id) {
            ctx.warn(Diagnostic::new(id, "no original file; size taken from the PNM"));
        }
    }
    ctx.write_rows("baselines.csv", &["image_id", "area", "filesize", "edge_density", "n_segments"], &rows)?;

    if let Some(scores_path) = &a.scores {
        let scores = tables::read_scores(scores_path)?;
        ctx.input(scores_path)?;
        let kept: Vec<&BaselineRow> = rows.iter().filter(|r| scores.contains_key(&r.image_id)).collect();
        if kept.len() < 4 {
            bail!("only {} images have both baselines and scores", kept.len());
        }
        let ids: Vec<String> = kept.iter().map(|r| r.image_id.clone()).collect();
        let y: Vec<f64> = ids.iter().map(|id| scores[id]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
        let random: Vec<f64> = kept.iter().map(|_| rng.random()).collect();
        let columns: [(&str, Vec<f64>); 4] = [
            ("area", kept.iter().map(|r| r.area).collect()),
            ("filesize", kept.iter().map(|r| r.filesize).collect()),
            ("edge_density", kept.iter().map(|r| r.edge_density).collect()),
            ("n_segments", kept.iter().map(|r| r.n_segments as f64).collect()),
        ];
        let mut table = vec![TauRow::new("random", kendall_tau(&random, &y)?.tau, ids.len())];
        for (name, col) in &columns {
            match kendall_tau(col, &y) {
                Ok(t) => table.push(TauRow::new(name, t.tau, ids.len())),
                Err(e) => ctx.warn(Diagnostic::new(name, e)),
            }
        }
        let refs: Vec<(&str, &[f64])> = columns.iter().map(|(n, c)| (*n, c.as_slice())).collect();
        let (row, diags) = combination_tau(&ids, &refs, &y, ctx.seed)?;
        ctx.diagnostics.extend(diags);
        table.push(row);
        ctx.write_rows("baseline_tau.csv", &TAU_HEADER, table)?;
    }
    ctx.manifest
        .param("k", a.k)
        .param("min_size", a.min_size)
        .param("sigma", a.sigma)
        .param("edge_normalize", a.edge_normalize)
        .param("edge_detector", "sobel gradient magnitude (replaces a learned structured-edge detector)")
        .result("n_images", rows.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Krr,
    NuSvr,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// VSDF feature file, one row per image.
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth difficulty (image_id,score,...).
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::NuSvr)]
    pub model: ModelArg,
    /// Split table from `vsd split`; otherwise a seeded 50/25/25 split.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Number of concatenated networks the features must come from.
    #[arg(long)]
    pub architectures: Option<u32>,
    /// Use raw rows instead of L2-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    /// Solver stopping tolerance.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub cs: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub nus: Vec<f64>,
}

fn rows_for(features: &FeatureMatrix, normalize: bool) -> anyhow::Result<Vec<Vec<f64>>> {
    Ok(if normalize {
        features.normalized_rows()?
    } else {
        (0..features.n_rows()).map(|i| features.row_f64(i)).collect()
    })
}

/// Restricts a split to `available`, reporting dropped ids.
fn restrict(s: Splits, available: &BTreeSet<&str>, ctx: &mut Ctx) -> Splits {
    let mut keep = |v: Vec<String>| -> Vec<String> {
        v.into_iter()
            .filter(|id| {
                let ok = available.contains(id.as_str());
                if !ok {
                    ctx.warn(Diagnostic::new(id, "in the split table but missing features or score"));
                }
                ok
            })
            .collect()
    };
    Splits {
        train: keep(s.train),
        val: keep(s.val),
        test: keep(s.test),
        excluded: s.excluded,
    }
}

#[derive(Serialize)]
struct GridRow {
    kind: &'static str,
    lambda: Option<f64>,
    c: Option<f64>,
    nu: Option<f64>,
    tau: Option<f64>,
    mse: Option<f64>,
    error: Option<String>,
    selected: u8,
}

pub fn train(ctx: &mut Ctx, a: &TrainArgs) -> anyhow::Result<()> {
    let features = vsdf::read_features_path(&a.features)?;
    ctx.input(&a.features)?;
    if let Some(n) = a.architectures {
        validate_layout(&features, &FeatureLayout::pyramid_flip(n))
            .with_context(|| format!("{} is not a {n}-network pyramid feature file", a.features.display()))?;
    }
    let scores = tables::read_scores(&a.scores)?;
    ctx.input(&a.scores)?;
    let mut available = BTreeSet::new();
    for id in features.ids() {
        if scores.contains_key(id) {
            available.insert(id.as_str());
        } else {
            ctx.warn(Diagnostic::new(id, "has features but no score"));
        }
    }
    for id in scores.keys() {
        if features.position(id).is_none() {
            ctx.warn(Diagnostic::new(id, "has a score but no features"));
        }
    }
    let splits = match &a.splits {
        Some(p) => {
            ctx.input(p)?;
            restrict(tables::read_splits(p)?, &available, ctx)
        }
        None => {
            let ids: Vec<String> = available.iter().map(|s| s.to_string()).collect();
            make_splits(&ids, &BTreeMap::new(), &SplitSpec::Random { seed: ctx.seed })?
        }
    };
    if splits.train.is_empty() || splits.val.is_empty() {
        bail!("training and validation sets must both be non-empty");
    }
    let all_rows = rows_for(&features, !a.no_normalize)?;
    let pos: BTreeMap<&str, usize> = features.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let gather = |ids: &[String]| -> (Vec<Vec<f64>>, Vec<f64>) {
        (
            ids.iter().map(|id| all_rows[pos[id.as_str()]].clone()).collect(),
            ids.iter().map(|id| scores[id]).collect(),
        )
    };
    let (train_rows, train_y) = gather(&splits.train);
    let (val_rows, val_y) = gather(&splits.val);
    let train_set = Dataset {
        ids: &splits.train,
        rows: &train_rows,
        targets: &train_y,
    };
    let val_set = Dataset {
        ids: &splits.val,
        rows: &val_rows,
        targets: &val_y,
    };
    check_disjoint(&train_set, &val_set)?;

    let grid = match a.model {
        ModelArg::Krr => Grid::Krr {
            lambdas: if a.lambdas.is_empty() {
                match Grid::default_krr() {
                    Grid::Krr { lambdas } => lambdas,
                    Grid::NuSvr { .. } => unreachable!(),
                }
            } else {
                a.lambdas.clone()
            },
        },
        ModelArg::NuSvr => {
            let Grid::NuSvr { cs, nus } = Grid::default_nu_svr() else { unreachable!() };
            Grid::NuSvr {
                cs: if a.cs.is_empty() { cs } else { a.cs.clone() },
                nus: if a.nus.is_empty() { nus } else { a.nus.clone() },
            }
        }
    };
    let points = grid.points();
    let results: Vec<GridPointResult> = points
        .par_iter()
        .map(|p| evaluate_point(&train_set, &val_set, *p, a.tol))
        .collect();
    let (report, model) = finish(&train_set, results, a.tol, ctx.seed)?;
    let model = model.with_l2_normalized(!a.no_normalize);
    model_io::save_model(&model, &ctx.out("model.json"))?;
    ctx.wrote("model.json")?;

    let grid_rows = report.points.iter().enumerate().map(|(i, r)| {
        let (kind, lambda, c, nu) = match r.point {
            GridPoint::Krr { lambda } => ("krr", Some(lambda), None, None),
            GridPoint::NuSvr { c, nu } => ("nu_svr", None, Some(c), Some(nu)),
        };
        GridRow {
            kind,
            lambda,
            c,
            nu,
            tau: r.tau,
            mse: r.mse,
            error: r.error.clone(),
            selected: u8::from(i == report.selected),
        }
    });
    ctx.write_rows("grid.csv", &["kind", "lambda", "c", "nu", "tau", "mse", "error", "selected"], grid_rows)?;
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    ctx.write_text("grid_report.json", &report_json)?;

    if !splits.test.is_empty() {
        let (test_rows, test_y) = gather(&splits.test);
        let pred = model.predict(&test_rows)?;
        let t = kendall_tau(&pred, &test_y)?;
        ctx.manifest
            .result("test_tau", t.tau)
            .result("test_pair_accuracy", pair_accuracy(t.tau))
            .result("n_test", test_y.len());
    }
    ctx.manifest
        .param("model", format!("{:?}", a.model).to_lowercase())
        .param("tol", a.tol)
        .param("l2_normalized", !a.no_normalize)
        .result("selected", report.selected_point().point)
        .result("val_tau", report.selected_point().tau)
        .result("n_train", splits.train.len())
        .result("n_val", splits.val.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

pub fn predict(ctx: &mut Ctx, a: &PredictArgs) -> anyhow::Result<()> {
    let model = model_io::load_model(&a.model)?;
    ctx.input(&a.model)?;
    let features = vsdf::read_features_path(&a.features)?;
    ctx.input(&a.features)?;
    let rows = rows_for(&features, model.l2_normalized)?;
    let pred = model.predict(&rows)?;
    ctx.write_rows(
        "predictions.csv",
        &["image_id", "score"],
        features.ids().iter().zip(&pred).map(|(id, &score)| IdScore {
            image_id: id.clone(),
            score,
        }),
    )?;
    ctx.manifest.result("n_predictions", pred.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubsetArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted difficulty (image_id,score).
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth difficulty (image_id,score,...).
    #[arg(long)]
    pub gt: PathBuf,
    /// Split table; with --subset, only that part is evaluated.
    #[arg(long, requires = "subset")]
    pub splits: Option<PathBuf>,
    #[arg(long, value_enum, requires = "splits")]
    pub subset: Option<SubsetArg>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub tau: f64,
    pub pair_accuracy: f64,
    pub mse: f64,
    pub n_concordant: u64,
    pub n_discordant: u64,
    pub n_pairs: u64,
}

pub fn evaluate(ctx: &mut Ctx, a: &EvaluateArgs) -> anyhow::Result<()> {
    let pred = tables::read_scores(&a.pred)?;
    let gt = tables::read_scores(&a.gt)?;
    ctx.input(&a.pred)?;
    ctx.input(&a.gt)?;
    let subset: Option<BTreeSet<String>> = match (&a.splits, a.subset) {
        (Some(p), Some(which)) => {
            ctx.input(p)?;
            let s = tables::read_splits(p)?;
            let ids = match which {
                SubsetArg::Train => s.train,
                SubsetArg::Val => s.val,
                SubsetArg::Test => s.test,
            };
            ctx.manifest.param("subset", format!("{:?}", SplitName::from(which)).to_lowercase());
            Some(ids.into_iter().collect())
        }
        _ => None,
    };
    let mut ids = Vec::new();
    for id in gt.keys() {
        if subset.as_ref().is_some_and(|s| !s.contains(id)) {
            continue;
        }
        if pred.contains_key(id) {
            ids.push(id.clone());
        } else {
            ctx.warn(Diagnostic::new(id, "no prediction"));
        }
    }
    for id in pred.keys() {
        if !gt.contains_key(id) && subset.as_ref().is_none_or(|s| s.contains(id)) {
            ctx.warn(Diagnostic::new(id, "prediction without ground truth"));
        }
    }
    let p: Vec<f64> = ids.iter().map(|id| pred[id]).collect();
    let g: Vec<f64> = ids.iter().map(|id| gt[id]).collect();
    let t = kendall_tau(&p, &g)?;
    let report = EvaluationReport {
        n: ids.len(),
        tau: t.tau,
        pair_accuracy: pair_accuracy(t.tau),
        mse: mse(&p, &g)?,
        n_concordant: t.n_concordant,
        n_discordant: t.n_discordant,
        n_pairs: t.n_pairs,
    };
    ctx.write_rows(
        "evaluation.csv",
        &["metric", "value"],
        [
            ("n", report.n as f64),
            ("tau", report.tau),
            ("pair_accuracy", report.pair_accuracy),
            ("mse", report.mse),
        ],
    )?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    ctx.write_text("evaluation.json", &json)?;
    ctx.manifest.result("tau", report.tau).result("mse", report.mse);
    Ok(())
}

impl From<SubsetArg> for SplitName {
    fn from(s: SubsetArg) -> Self {
        match s {
            SubsetArg::Train => SplitName::Train,
            SubsetArg::Val => SplitName::Val,
            SubsetArg::Test => SplitName::Test,
        }
    }
}
