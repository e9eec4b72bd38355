//! The `vsd` command line.
//!
//! Every subcommand writes its outputs and a `manifest.json` into `--out-dir`.
//! Non-fatal findings go to `diagnostics.csv` and to stderr as JSON lines; any
//! error ends the run with a non-zero exit code.

mod annotations;
mod experiments;
mod predictors;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use serde::Serialize;
use vsd_core::Diagnostic;

use crate::manifest::Manifest;
use crate::tables;

#[derive(Debug, Parser)]
#[command(
    name = "vsd",
    version,
    about = "Visual search difficulty: scoring, prediction and curriculum experiments",
    after_help = "Images must be binary or ASCII PNM (PPM/PGM). Convert other formats first, \
                  for example `convert photo.jpg photo.ppm`, and pass the originals with \
                  --originals so file sizes are taken from the compressed files."
)]
pub struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "VSD_THREADS")]
    pub threads: Option<usize>,

    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = "vsd-out")]
    pub out_dir: PathBuf,

    /// Where to write the run manifest; defaults to `<out-dir>/manifest.json`.
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clean an annotation log and score every image.
    ProcessAnnotations(annotations::ProcessArgs),
    /// Derive per-image properties from box metadata and correlate them with difficulty.
    ComputeProperties(annotations::PropertiesArgs),
    /// Score images by area, file size, edge strength and segment count.
    Baselines(predictors::BaselinesArgs),
    /// Fit a difficulty regressor on feature files with validation tuning.
    Train(predictors::TrainArgs),
    /// Apply a saved model to a feature file.
    Predict(predictors::PredictArgs),
    /// Compare predicted with ground-truth difficulty.
    Evaluate(predictors::EvaluateArgs),
    /// Weakly supervised localization with the standard and easy-to-hard schedules.
    Mil(experiments::MilArgs),
    /// Self-training with the selection heuristics on one or more classes.
    Selftrain(experiments::SelftrainArgs),
    /// Convert a directory of VOC XML annotations to box and size tables.
    ConvertMetadata(annotations::ConvertArgs),
    /// Run a synthetic benchmark or write the synthetic test data.
    SynthBench(experiments::SynthArgs),
    /// Partition image ids into train, validation and test sets.
    Split(annotations::SplitArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ProcessAnnotations(_) => "process-annotations",
            Command::ComputeProperties(_) => "compute-properties",
            Command::Baselines(_) => "baselines",
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Mil(_) => "mil",
            Command::Selftrain(_) => "selftrain",
            Command::ConvertMetadata(_) => "convert-metadata",
            Command::SynthBench(_) => "synth-bench",
            Command::Split(_) => "split",
        }
    }
}

/// State shared by a running subcommand.
pub(crate) struct Ctx {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub diagnostics: Vec<Diagnostic>,
    pub seed: u64,
}

impl Ctx {
    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.input(path)?;
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    /// Records an output already written under `out_dir`.
    pub fn wrote(&mut self, name: &str) -> anyhow::Result<()> {
        self.manifest.output(&self.out_dir, name)?;
        Ok(())
    }

    pub fn write_rows<T: Serialize>(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
        tables::write_rows_with_header(&self.out(name), header, rows)?;
        self.wrote(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        let path = self.out(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.wrote(name)
    }

    pub fn warn(&mut self, d: Diagnostic) {
        self.diagnostics.push(d);
    }
}

/// One point of a plot series.
#[derive(Debug, Clone, Serialize)]
pub(crate) struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

pub(crate) const PLOT_HEADER: [&str; 3] = ["series", "x", "y"];

fn execute(cli: Cli) -> anyhow::Result<Vec<Diagnostic>> {
    std::fs::create_dir_all(&cli.out_dir).with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let mut ctx = Ctx {
        out_dir: cli.out_dir.clone(),
        manifest: Manifest::new(cli.command.name(), Some(cli.seed)),
        diagnostics: Vec::new(),
        seed: cli.seed,
    };
    match &cli.command {
        Command::ProcessAnnotations(a) => annotations::process(&mut ctx, a)?,
        Command::ComputeProperties(a) => annotations::properties(&mut ctx, a)?,
        Command::ConvertMetadata(a) => annotations::convert(&mut ctx, a)?,
        Command::Split(a) => annotations::split(&mut ctx, a)?,
        Command::Baselines(a) => predictors::baselines(&mut ctx, a)?,
        Command::Train(a) => predictors::train(&mut ctx, a)?,
        Command::Predict(a) => predictors::predict(&mut ctx, a)?,
        Command::Evaluate(a) => predictors::evaluate(&mut ctx, a)?,
        Command::Mil(a) => experiments::mil(&mut ctx, a)?,
        Command::Selftrain(a) => experiments::selftrain(&mut ctx, a)?,
        Command::SynthBench(a) => experiments::synth_bench(&mut ctx, a)?,
    }
    ctx.diagnostics.sort();
    ctx.diagnostics.dedup();
    tables::write_diagnostics(&ctx.out("diagnostics.csv"), &ctx.diagnostics)?;
    ctx.wrote("diagnostics.csv")?;
    ctx.manifest.n_diagnostics = ctx.diagnostics.len();
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| ctx.out("manifest.json"));
    ctx.manifest.write(&manifest_path)?;
    Ok(ctx.diagnostics)
}

pub fn run(cli: Cli) -> ExitCode {
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({"level": "error", "message": e.to_string()}));
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(diagnostics) => {
            for d in diagnostics {
                eprintln!(
                    "{}",
                    serde_json::json!({"level": "warning", "subject": d.subject, "message": d.message})
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("{}", serde_json::json!({"level": "error", "message": chain.join(": ")}));
            ExitCode::FAILURE
        }
    }
}

pub fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => run(cli),
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({"level": "error", "kind": "usage", "message": e.to_string()}));
            ExitCode::from(2)
        }
    }
}
