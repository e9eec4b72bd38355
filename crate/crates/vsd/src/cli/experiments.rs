use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context as _};
use clap::{Args, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vsd_core::features::{FeatureLayout, FeatureMatrix};
use vsd_core::metrics::mean_average_precision;
use vsd_core::mil::{generate_synthetic_bags, run_mil, uniform_signal, MilParams, Schedule, SyntheticMilConfig};
use vsd_core::regression::SvcParams;
use vsd_core::selftrain::{
    selftrain_run, summarize_trajectories, Heuristic, SampleSplit, SelftrainData, SelftrainParams,
    SyntheticSelftrainConfig,
};

use super::{Ctx, PlotPoint, PLOT_HEADER};
use crate::bench::{self, mil_bench, selftrain_bench, selftrain_bench_params};
use crate::mil_data::{self, MIL_FILES};
use crate::tables::{self, IdScore};
use crate::vsdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Standard,
    EasyToHard,
    Both,
}

#[derive(Debug, Args)]
pub struct MilArgs {
    /// Bag table (image_id,label,difficulty,window_count).
    #[arg(long)]
    pub bags: PathBuf,
    /// Window table (image_id,window_index,xmin,ymin,xmax,ymax).
    #[arg(long)]
    pub windows: PathBuf,
    /// Window features keyed `image_id#window_index`.
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth boxes in the box table format.
    #[arg(long)]
    pub boxes: PathBuf,
    /// Only boxes of this class count as ground truth.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, value_enum, default_value_t = ScheduleArg::Both)]
    pub schedule: ScheduleArg,
    #[arg(long)]
    pub l2_normalize: bool,
    #[arg(long, default_value_t = 9)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub batches: usize,
    #[arg(long, default_value_t = 3)]
    pub iters_per_batch: usize,
    #[arg(long, default_value_t = 1.0)]
    pub svc_c: f64,
    #[arg(long, default_value_t = 0.1)]
    pub svc_tol: f64,
    #[arg(long, default_value_t = 1000)]
    pub mine_per_round: usize,
    #[arg(long, default_value_t = 5)]
    pub mining_rounds: usize,
}

#[derive(Serialize)]
struct SelectionRow<'a> {
    image_id: &'a str,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
}

pub fn mil(ctx: &mut Ctx, a: &MilArgs) -> anyhow::Result<()> {
    let data = mil_data::load_bags(&a.bags, &a.windows, &a.features, &a.boxes, a.class.as_deref(), a.l2_normalize)?;
    for p in [&a.bags, &a.windows, &a.features, &a.boxes] {
        ctx.input(p)?;
    }
    ctx.diagnostics.extend(data.diagnostics.iter().cloned());
    let params = MilParams {
        svc: SvcParams {
            c: a.svc_c,
            tol: a.svc_tol,
            seed: ctx.seed,
            ..MilParams::default().svc
        },
        mine_per_round: a.mine_per_round,
        mining_rounds: a.mining_rounds,
        ..MilParams::default()
    };
    let mut schedules = Vec::new();
    if a.schedule != ScheduleArg::EasyToHard {
        schedules.push(("standard", Schedule::Standard { iterations: a.iterations }));
    }
    if a.schedule != ScheduleArg::Standard {
        schedules.push((
            "easy_to_hard",
            Schedule::EasyToHard {
                k_batches: a.batches,
                iters_per_batch: a.iters_per_batch,
            },
        ));
    }
    let runs = schedules
        .par_iter()
        .map(|(name, schedule)| {
            let mut positives = data.positives.clone();
            run_mil(&mut positives, &data.negatives, &data.ground_truth, *schedule, &params).map(|r| (*name, r))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut corloc = Vec::new();
    for (name, run) in &runs {
        let trajectory = std::iter::once(run.initial_corloc).chain(run.corloc.iter().copied());
        corloc.extend(trajectory.enumerate().map(|(i, c)| PlotPoint {
            series: (*name).into(),
            x: i as f64,
            y: c,
        }));
        ctx.write_rows(
            &format!("selections_{name}.csv"),
            &["image_id", "xmin", "ymin", "xmax", "ymax"],
            run.final_selections.iter().map(|(id, b)| SelectionRow {
                image_id: id,
                xmin: b.xmin,
                ymin: b.ymin,
                xmax: b.xmax,
                ymax: b.ymax,
            }),
        )?;
        ctx.manifest
            .result(&format!("{name}_initial_corloc"), run.initial_corloc)
            .result(&format!("{name}_final_corloc"), run.corloc.last().copied().unwrap_or(run.initial_corloc));
    }
    ctx.write_rows(
        "corloc.csv",
        &["schedule", "iteration", "corloc"],
        corloc.iter().map(|p| (&p.series, p.x as usize, p.y)),
    )?;
    ctx.write_rows("plot.csv", &PLOT_HEADER, &corloc)?;
    ctx.manifest
        .param("schedule", format!("{:?}", a.schedule).to_lowercase())
        .param("class", &a.class)
        .param("l2_normalize", a.l2_normalize)
        .param("iterations", a.iterations)
        .param("batches", a.batches)
        .param("iters_per_batch", a.iters_per_batch)
        .param("svc_c", a.svc_c)
        .param("svc_tol", a.svc_tol)
        .param("mine_per_round", a.mine_per_round)
        .param("mining_rounds", a.mining_rounds)
        .result("n_positive_bags", data.positives.len())
        .result("n_negative_bags", data.negatives.len());
    Ok(())
}

/// Settings of a self-training experiment, read from TOML.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SelftrainConfig {
    pub classes: Vec<String>,
    #[serde(default = "all_heuristics")]
    pub heuristics: Vec<String>,
    /// Initial labeled examples per run, drawn from the train and val splits
    /// so that both labels occur.
    pub n_labeled: usize,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub big_k: Option<usize>,
    #[serde(default)]
    pub stop_multiple: Option<usize>,
    #[serde(default)]
    pub min_positive_fraction: Option<f64>,
    #[serde(default)]
    pub svc_c: Option<f64>,
    #[serde(default)]
    pub svc_tol: Option<f64>,
}

fn all_heuristics() -> Vec<String> {
    Heuristic::ALL.iter().map(|h| h.name().to_string()).collect()
}

fn default_runs() -> u64 {
    5
}

impl SelftrainConfig {
    fn params(&self) -> SelftrainParams {
        let d = SelftrainParams::default();
        SelftrainParams {
            k: self.k.unwrap_or(d.k),
            big_k: self.big_k.unwrap_or(d.big_k),
            stop_multiple: self.stop_multiple.unwrap_or(d.stop_multiple),
            min_positive_fraction: self.min_positive_fraction.unwrap_or(d.min_positive_fraction),
            svc: SvcParams {
                c: self.svc_c.unwrap_or(d.svc.c),
                tol: self.svc_tol.unwrap_or(d.svc.tol),
                ..d.svc
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct SelftrainArgs {
    /// TOML run specification.
    #[arg(long)]
    pub config: PathBuf,
    /// VSDF image features.
    #[arg(long)]
    pub features: PathBuf,
    /// Box table; an image is positive for a class when it has a box of it.
    #[arg(long)]
    pub boxes: PathBuf,
    /// Split table: train and val form the pool, test is held out.
    #[arg(long)]
    pub splits: PathBuf,
    #[arg(long)]
    pub gt_scores: Option<PathBuf>,
    #[arg(long)]
    pub pred_scores: Option<PathBuf>,
}

#[derive(Serialize)]
struct PerRunRow<'a> {
    class: &'a str,
    heuristic: &'a str,
    run: u64,
    iteration: usize,
    labeled: usize,
    ap: f64,
}

/// Extends a trajectory with its last value up to `len`.
fn padded(ap: &[f64], len: usize) -> Vec<f64> {
    let last = ap.last().copied().unwrap_or(0.0);
    ap.iter().copied().chain(std::iter::repeat(last)).take(len).collect()
}

pub fn selftrain(ctx: &mut Ctx, a: &SelftrainArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let config: SelftrainConfig = toml::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    ctx.input(&a.config)?;
    let heuristics: Vec<Heuristic> = config.heuristics.iter().map(|h| h.parse()).collect::<Result<_, _>>()?;
    if config.classes.is_empty() || heuristics.is_empty() {
        bail!("the config needs at least one class and one heuristic");
    }
    let features = vsdf::read_features_path(&a.features)?;
    ctx.input(&a.features)?;
    let image_classes = tables::image_classes(&tables::read_boxes(&a.boxes)?);
    ctx.input(&a.boxes)?;
    let splits = tables::read_splits(&a.splits)?;
    ctx.input(&a.splits)?;
    let mut read_optional = |p: &Option<PathBuf>| -> anyhow::Result<BTreeMap<String, f64>> {
        match p {
            Some(p) => {
                ctx.input(p)?;
                Ok(tables::read_scores(p)?)
            }
            None => Ok(BTreeMap::new()),
        }
    };
    let gt = read_optional(&a.gt_scores)?;
    let pred = read_optional(&a.pred_scores)?;

    let rows = features.normalized_rows()?;
    let pos: BTreeMap<&str, usize> = features.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let pick = |ids: &[String], ctx: &mut Ctx| -> Vec<String> {
        ids.iter()
            .filter(|id| {
                let ok = pos.contains_key(id.as_str());
                if !ok {
                    ctx.warn(vsd_core::Diagnostic::new(id, "in the split table but has no features"));
                }
                ok
            })
            .cloned()
            .collect()
    };
    let mut pool = pick(&splits.train, ctx);
    pool.extend(pick(&splits.val, ctx));
    let test = pick(&splits.test, ctx);
    if pool.len() <= config.n_labeled || test.is_empty() {
        bail!("need more than n_labeled = {} pool images and a non-empty test split", config.n_labeled);
    }
    let ordered: Vec<String> = pool.iter().chain(&test).cloned().collect();
    let base = SelftrainData {
        ids: ordered.clone(),
        features: ordered.iter().map(|id| rows[pos[id.as_str()]].clone()).collect(),
        labels: vec![false; ordered.len()],
        gt_difficulty: ordered.iter().map(|id| gt.get(id).copied()).collect(),
        pred_difficulty: ordered.iter().map(|id| pred.get(id).copied()).collect(),
    };
    let params = config.params();
    let run_seeds: Vec<u64> = (0..config.runs).map(|r| ctx.seed + r).collect();
    let n_pool = pool.len();

    // (class, heuristic, run) -> AP trajectory and labeled sizes
    let mut jobs: Vec<(&String, Heuristic, u64)> = Vec::new();
    for c in &config.classes {
        for &h in &heuristics {
            jobs.extend(run_seeds.iter().map(|&s| (c, h, s)));
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(class, h, seed)| -> anyhow::Result<_> {
            let mut data = base.clone();
            data.labels = ordered
                .iter()
                .map(|id| image_classes.get(id).is_some_and(|c| c.contains(class)))
                .collect();
            let mut order: Vec<usize> = (0..n_pool).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            // Both labels must be present to fit the first classifier.
            let n = config.n_labeled;
            for want in [true, false] {
                if n >= 2 && !order[..n].iter().any(|&i| data.labels[i] == want) {
                    if let Some(j) = (n..n_pool).find(|&j| data.labels[order[j]] == want) {
                        order.swap(n - 1, j);
                    }
                }
            }
            let split = SampleSplit {
                labeled: order[..config.n_labeled].to_vec(),
                unlabeled: order[config.n_labeled..].to_vec(),
                test: (n_pool..ordered.len()).collect(),
            };
            let p = SelftrainParams {
                seed,
                svc: SvcParams { seed, ..params.svc },
                ..params
            };
            let run = selftrain_run(&data, &split, h, &p).with_context(|| format!("class {class}, {h}, run seed {seed}"))?;
            Ok((class.as_str(), h, seed, run))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut per_run = Vec::new();
    let len = results.iter().map(|r| r.3.ap.len()).max().unwrap_or(0);
    let mut by_key: BTreeMap<(Heuristic, u64), Vec<Vec<f64>>> = BTreeMap::new();
    for (class, h, seed, run) in &results {
        for d in &run.diagnostics {
            ctx.warn(vsd_core::Diagnostic::new(format!("{class}/{h}/{seed}/{}", d.subject), &d.message));
        }
        for (i, ap) in run.ap.iter().enumerate() {
            per_run.push(PerRunRow {
                class,
                heuristic: h.name(),
                run: *seed,
                iteration: i,
                labeled: run.labeled_sizes.get(i).copied().unwrap_or(0),
                ap: *ap,
            });
        }
        by_key.entry((*h, *seed)).or_default().push(padded(&run.ap, len));
    }
    ctx.write_rows("per_run.csv", &["class", "heuristic", "run", "iteration", "labeled", "ap"], per_run)?;

    let mut map_rows = Vec::new();
    let mut plot = Vec::new();
    for &h in &heuristics {
        let runs: Vec<Vec<f64>> = run_seeds
            .iter()
            .map(|s| {
                let per_class = &by_key[&(h, *s)];
                (0..len)
                    .map(|t| mean_average_precision(&per_class.iter().map(|r| r[t]).collect::<Vec<_>>()))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;
        let summary = summarize_trajectories(&runs)?;
        for t in 0..len {
            map_rows.push((h.name(), t, summary.mean[t], summary.std[t], summary.n_runs));
            plot.push(PlotPoint {
                series: h.name().into(),
                x: t as f64,
                y: summary.mean[t],
            });
        }
        ctx.manifest.result(&format!("final_map_{}", h.name()), summary.mean[len - 1]);
    }
    ctx.write_rows("map.csv", &["heuristic", "iteration", "map_mean", "map_std", "n_runs"], map_rows)?;
    ctx.write_rows("plot.csv", &PLOT_HEADER, plot)?;
    ctx.manifest
        .param("config", &config)
        .result("n_pool", n_pool)
        .result("n_test", test.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub bench: SynthCommand,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Both MIL schedules on generated bags, one benchmark per seed.
    Mil {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Bags without noise or context clutter.
        #[arg(long)]
        noise_free: bool,
    },
    /// The self-training heuristics on generated two-class data.
    Selftrain {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Comma-separated heuristic names; all by default.
        #[arg(long, value_delimiter = ',')]
        heuristics: Vec<String>,
    },
    /// Write the small data sets used by the tests.
    Data,
}

/// The generated bags checked in for the CLI tests.
pub fn small_mil_config() -> SyntheticMilConfig {
    SyntheticMilConfig {
        n_positive: 30,
        n_negative: 30,
        instances_per_bag: 20,
        signal: uniform_signal(16, 3.0),
        noise_tiers: vec![0.35, 0.7, 1.4],
        context: Vec::new(),
        context_tiers: Vec::new(),
        context_rate: 0.0,
    }
}

pub fn synth_bench(ctx: &mut Ctx, a: &SynthArgs) -> anyhow::Result<()> {
    match &a.bench {
        SynthCommand::Mil { seeds, noise_free } => {
            let config = if *noise_free {
                SyntheticMilConfig::noise_free()
            } else {
                SyntheticMilConfig::tiered()
            };
            let seeds: Vec<u64> = (ctx.seed..ctx.seed + seeds).collect();
            let result = mil_bench(&config, &MilParams::default(), &seeds)?;
            let mut rows = Vec::new();
            for r in &result.runs {
                for (schedule, t) in [("standard", &r.standard), ("easy_to_hard", &r.easy_to_hard)] {
                    rows.extend(t.iter().enumerate().map(|(i, c)| (r.seed, schedule, i, *c)));
                }
            }
            ctx.write_rows("corloc.csv", &["seed", "schedule", "iteration", "corloc"], rows)?;
            let (standard, e2h) = result.summaries()?;
            let mut plot = Vec::new();
            let mut trajectory = Vec::new();
            for (name, s) in [("standard", &standard), ("easy_to_hard", &e2h)] {
                for (i, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
                    trajectory.push((name, i, *m, *sd));
                    plot.push(PlotPoint {
                        series: name.into(),
                        x: i as f64,
                        y: *m,
                    });
                }
            }
            ctx.write_rows("trajectory.csv", &["schedule", "iteration", "mean", "std"], trajectory)?;
            ctx.write_rows("plot.csv", &PLOT_HEADER, plot)?;
            ctx.manifest
                .param("bench", "mil")
                .param("noise_free", *noise_free)
                .param("seeds", &seeds)
                .result("n_not_worse", result.n_not_worse())
                .result("mean_gain", result.mean_gain())
                .result("final_standard", standard.mean.last().copied())
                .result("final_easy_to_hard", e2h.mean.last().copied());
        }
        SynthCommand::Selftrain { seeds, heuristics } => {
            let hs: Vec<Heuristic> = if heuristics.is_empty() {
                Heuristic::ALL.to_vec()
            } else {
                heuristics.iter().map(|h| h.parse()).collect::<Result<_, _>>()?
            };
            let seeds: Vec<u64> = (ctx.seed..ctx.seed + seeds).collect();
            let config = SyntheticSelftrainConfig::default();
            let result = selftrain_bench(&config, &selftrain_bench_params(), &hs, &seeds)?;
            let mut rows = Vec::new();
            let mut plot = Vec::new();
            for &h in &hs {
                let s = result.summary(h)?;
                for (i, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
                    rows.push((h.name(), i, *m, *sd));
                    plot.push(PlotPoint {
                        series: h.name().into(),
                        x: i as f64,
                        y: *m,
                    });
                }
                ctx.manifest.result(&format!("final_ap_{}", h.name()), result.mean_final(h));
            }
            ctx.write_rows("trajectory.csv", &["heuristic", "iteration", "mean_ap", "std_ap"], rows)?;
            ctx.write_rows("plot.csv", &PLOT_HEADER, plot)?;
            ctx.manifest
                .param("bench", "selftrain")
                .param("seeds", &seeds)
                .result("baseline_ap", result.mean_baseline());
        }
        SynthCommand::Data => write_test_data(ctx)?,
    }
    Ok(())
}

fn write_test_data(ctx: &mut Ctx) -> anyhow::Result<()> {
    let (matrix, scores) = bench::synthetic_regression(120, 16, ctx.seed)?;
    vsdf::write_features_path(&matrix, &ctx.out("regression.vsdf"))?;
    ctx.wrote("regression.vsdf")?;
    let manifest = vsdf::FeatureManifest::describe(&matrix, "synthetic-linear");
    vsdf::write_feature_manifest(&manifest, &ctx.out("regression.toml"))?;
    ctx.wrote("regression.toml")?;
    ctx.write_rows(
        "regression_scores.csv",
        &["image_id", "score"],
        scores.into_iter().map(|(image_id, score)| IdScore { image_id, score }),
    )?;
    for (name, n) in [("layout_1net.vsdf", 1), ("layout_2net.vsdf", 2)] {
        let layout = FeatureLayout::pyramid_flip(n);
        let empty = FeatureMatrix::new(Vec::new(), layout.dim() as usize, Vec::new(), Some(layout))?;
        vsdf::write_features_path(&empty, &ctx.out(name))?;
        ctx.wrote(name)?;
    }
    let dir = ctx.out("mil");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mil = generate_synthetic_bags(&small_mil_config(), ctx.seed)?;
    mil_data::write_synthetic_mil(&dir, &mil)?;
    for f in MIL_FILES {
        ctx.wrote(&format!("mil/{f}"))?;
    }
    ctx.manifest.param("bench", "data").result("n_regression_rows", matrix.n_rows());
    Ok(())
}
