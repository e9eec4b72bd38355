//! Self-training: grow the labeled set with examples the current classifier
//! labels itself, picked by one of several heuristics.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::metrics::{average_precision, sample_std};
use crate::regression::{linear_svc_fit, RegressionModel, SvcParams};
use crate::{Diagnostic, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heuristic {
    Rand,
    GtDifficulty,
    PrDifficulty,
    HiConfidence,
    LoConfidence,
    LoConfidencePrDifficulty,
}

impl Heuristic {
    pub const ALL: [Heuristic; 6] = [
        Heuristic::Rand,
        Heuristic::GtDifficulty,
        Heuristic::PrDifficulty,
        Heuristic::HiConfidence,
        Heuristic::LoConfidence,
        Heuristic::LoConfidencePrDifficulty,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::Rand => "RAND",
            Heuristic::GtDifficulty => "GTdifficulty",
            Heuristic::PrDifficulty => "PRdifficulty",
            Heuristic::HiConfidence => "HIconfidence",
            Heuristic::LoConfidence => "LOconfidence",
            Heuristic::LoConfidencePrDifficulty => "LOconfidence+PRdifficulty",
        }
    }

    fn needs_decision(&self) -> bool {
        matches!(
            self,
            Heuristic::HiConfidence | Heuristic::LoConfidence | Heuristic::LoConfidencePrDifficulty
        )
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Heuristic::ALL
            .into_iter()
            .find(|h| h.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown heuristic `{s}`")))
    }
}

/// One unlabeled example as the selection step sees it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub decision: Option<f64>,
    pub gt_difficulty: Option<f64>,
    pub pred_difficulty: Option<f64>,
}

/// `k` smallest by `key`; ties keep the order of `idx`.
fn smallest_by(mut idx: Vec<usize>, k: usize, key: impl Fn(usize) -> f64) -> Vec<usize> {
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    idx.truncate(k);
    idx
}

/// Picks `k` positions of `pool`. `pool` should be in id order so that ties
/// resolve by id; `big_k` only matters for the two-stage heuristic.
pub fn select_candidates<R: Rng>(
    heuristic: Heuristic,
    pool: &[Candidate<'_>],
    k: usize,
    big_k: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if k == 0 || big_k < k {
        return Err(Error::param("k", "need 0 < k <= K"));
    }
    if pool.len() < k {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: pool.len(),
        });
    }
    let score = |pick: fn(&Candidate<'_>) -> Option<f64>| -> Result<Vec<f64>> {
        pool.iter()
            .map(|c| pick(c).ok_or_else(|| Error::MissingScore(c.id.into())))
            .collect()
    };
    let all: Vec<usize> = (0..pool.len()).collect();
    let picked = match heuristic {
        Heuristic::Rand => rand::seq::index::sample(rng, pool.len(), k).into_vec(),
        Heuristic::GtDifficulty => {
            let d = score(|c| c.gt_difficulty)?;
            smallest_by(all, k, |i| d[i])
        }
        Heuristic::PrDifficulty => {
            let d = score(|c| c.pred_difficulty)?;
            smallest_by(all, k, |i| d[i])
        }
        Heuristic::HiConfidence => {
            let v = score(|c| c.decision)?;
            smallest_by(all, k, |i| -libm::fabs(v[i]))
        }
        Heuristic::LoConfidence => {
            let v = score(|c| c.decision)?;
            smallest_by(all, k, |i| libm::fabs(v[i]))
        }
        Heuristic::LoConfidencePrDifficulty => {
            let v = score(|c| c.decision)?;
            let stage = smallest_by(all, big_k, |i| libm::fabs(v[i]));
            let d: Vec<Option<f64>> = pool.iter().map(|c| c.pred_difficulty).collect();
            if let Some(&i) = stage.iter().find(|&&i| d[i].is_none()) {
                return Err(Error::MissingScore(pool[i].id.into()));
            }
            let mut stage = stage;
            stage.sort_unstable();
            smallest_by(stage, k, |i| d[i].unwrap_or(f64::INFINITY))
        }
    };
    Ok(picked)
}

/// Positive iff the decision value is strictly positive.
pub fn pseudo_label(decision: f64) -> bool {
    decision > 0.0
}

/// Examples of one binary problem. Row `i` of every field describes the same
/// example.
#[derive(Debug, Clone, PartialEq)]
pub struct SelftrainData {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub gt_difficulty: Vec<Option<f64>>,
    pub pred_difficulty: Vec<Option<f64>>,
}

impl SelftrainData {
    fn check(&self) -> Result<()> {
        let n = self.ids.len();
        for len in [
            self.features.len(),
            self.labels.len(),
            self.gt_difficulty.len(),
            self.pred_difficulty.len(),
        ] {
            if len != n {
                return Err(Error::LengthMismatch { left: n, right: len });
            }
        }
        Ok(())
    }
}

/// Row indices of the labeled, unlabeled and test sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub test: Vec<usize>,
}

impl SampleSplit {
    fn check(&self, n: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for &i in self.labeled.iter().chain(&self.unlabeled).chain(&self.test) {
            if i >= n {
                return Err(Error::InvalidConfig(format!("row {i} out of range")));
            }
            if !seen.insert(i) {
                return Err(Error::OverlappingSplits(format!("row {i}")));
            }
        }
        if self.labeled.is_empty() || self.test.is_empty() {
            return Err(Error::Empty("labeled or test set"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftrainParams {
    pub k: usize,
    pub big_k: usize,
    /// Stop once the labeled set reaches this multiple of its initial size.
    pub stop_multiple: usize,
    /// Minimum positive fraction among labeled and unlabeled examples.
    pub min_positive_fraction: f64,
    pub svc: SvcParams,
    pub seed: u64,
}

impl Default for SelftrainParams {
    fn default() -> Self {
        Self {
            k: 50,
            big_k: 2000,
            stop_multiple: 3,
            min_positive_fraction: 0.05,
            svc: SvcParams {
                tol: 1e-2,
                ..SvcParams::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftrainRun {
    /// Test AP before any self-training, then after each iteration.
    pub ap: Vec<f64>,
    pub labeled_sizes: Vec<usize>,
    /// Fraction of pseudo-labels that agree with the hidden truth.
    pub pseudo_label_accuracy: f64,
    pub final_split: SampleSplit,
    pub diagnostics: Vec<Diagnostic>,
}

fn fit(data: &SelftrainData, rows: &[usize], labels: &[bool], svc: &SvcParams) -> Result<RegressionModel> {
    let x: Vec<&[f64]> = rows.iter().map(|&i| data.features[i].as_slice()).collect();
    linear_svc_fit(&x, labels, svc)
}

fn test_ap(data: &SelftrainData, model: &RegressionModel, test: &[usize]) -> Result<f64> {
    let scores: Vec<f64> = test
        .iter()
        .map(|&i| model.decision(&data.features[i]))
        .collect::<Result<_>>()?;
    let labels: Vec<bool> = test.iter().map(|&i| data.labels[i]).collect();
    average_precision(&scores, &labels)
}

/// Runs the loop for one heuristic. The classifier is retrained from scratch
/// each iteration and pseudo-labels, once assigned, never change.
pub fn selftrain_run(
    data: &SelftrainData,
    split: &SampleSplit,
    heuristic: Heuristic,
    params: &SelftrainParams,
) -> Result<SelftrainRun> {
    data.check()?;
    split.check(data.ids.len())?;
    let pool = split.labeled.len() + split.unlabeled.len();
    let positives = split
        .labeled
        .iter()
        .chain(&split.unlabeled)
        .filter(|&&i| data.labels[i])
        .count();
    if !(positives as f64 > params.min_positive_fraction * pool as f64) {
        return Err(Error::InvalidConfig(format!(
            "{positives} of {pool} training examples are positive; need more than {:.0}%",
            100.0 * params.min_positive_fraction
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut labeled = split.labeled.clone();
    let mut labels: Vec<bool> = labeled.iter().map(|&i| data.labels[i]).collect();
    let mut unlabeled = split.unlabeled.clone();
    unlabeled.sort_by(|&a, &b| data.ids[a].cmp(&data.ids[b]));
    let target = params.stop_multiple * split.labeled.len();

    let mut model = fit(data, &labeled, &labels, &params.svc)?;
    let mut ap = alloc::vec![test_ap(data, &model, &split.test)?];
    let mut sizes = alloc::vec![labeled.len()];
    let mut diagnostics = Vec::new();
    let (mut n_pseudo, mut n_agree) = (0usize, 0usize);

    while labeled.len() < target {
        let want = params.k.min(target - labeled.len());
        if unlabeled.len() < want {
            diagnostics.push(Diagnostic::new(
                heuristic,
                format!("unlabeled pool exhausted at |L| = {}", labeled.len()),
            ));
            break;
        }
        let decisions: Vec<Option<f64>> = if heuristic.needs_decision() {
            unlabeled
                .iter()
                .map(|&i| model.decision(&data.features[i]).map(Some))
                .collect::<Result<_>>()?
        } else {
            alloc::vec![None; unlabeled.len()]
        };
        let candidates: Vec<Candidate<'_>> = unlabeled
            .iter()
            .zip(&decisions)
            .map(|(&i, &decision)| Candidate {
                id: &data.ids[i],
                decision,
                gt_difficulty: data.gt_difficulty[i],
                pred_difficulty: data.pred_difficulty[i],
            })
            .collect();
        let picked = select_candidates(heuristic, &candidates, want, params.big_k.max(want), &mut rng)?;
        let chosen: BTreeSet<usize> = picked.iter().copied().collect();
        for &p in &picked {
            let row = unlabeled[p];
            let label = pseudo_label(model.decision(&data.features[row])?);
            n_pseudo += 1;
            n_agree += usize::from(label == data.labels[row]);
            labeled.push(row);
            labels.push(label);
        }
        unlabeled = unlabeled
            .iter()
            .enumerate()
            .filter(|(p, _)| !chosen.contains(p))
            .map(|(_, &i)| i)
            .collect();
        model = fit(data, &labeled, &labels, &params.svc)?;
        ap.push(test_ap(data, &model, &split.test)?);
        sizes.push(labeled.len());
    }
    Ok(SelftrainRun {
        ap,
        labeled_sizes: sizes,
        pseudo_label_accuracy: if n_pseudo == 0 {
            1.0
        } else {
            n_agree as f64 / n_pseudo as f64
        },
        final_split: SampleSplit {
            labeled,
            unlabeled,
            test: split.test.clone(),
        },
        diagnostics,
    })
}

/// Per-iteration mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_runs: usize,
}

pub fn summarize_trajectories(runs: &[Vec<f64>]) -> Result<TrajectorySummary> {
    let first = runs.first().ok_or(Error::Empty("runs"))?;
    if let Some(r) = runs.iter().find(|r| r.len() != first.len()) {
        return Err(Error::LengthMismatch {
            left: first.len(),
            right: r.len(),
        });
    }
    let column = |t: usize| -> Vec<f64> { runs.iter().map(|r| r[t]).collect() };
    Ok(TrajectorySummary {
        mean: (0..first.len())
            .map(|t| column(t).iter().sum::<f64>() / runs.len() as f64)
            .collect(),
        std: (0..first.len()).map(|t| sample_std(&column(t))).collect(),
        n_runs: runs.len(),
    })
}

/// Repeats `run` for each seed and summarizes the trajectories.
pub fn repeat_runs(seeds: &[u64], mut run: impl FnMut(u64) -> Result<Vec<f64>>) -> Result<TrajectorySummary> {
    let runs: Vec<Vec<f64>> = seeds.iter().map(|&s| run(s)).collect::<Result<_>>()?;
    summarize_trajectories(&runs)
}

/// Two Gaussian classes whose per-example spread is the example's difficulty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSelftrainConfig {
    pub dim: usize,
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub positive_rate: f64,
    /// Distance of each class centre from the origin.
    pub separation: f64,
    /// Per-example spread is drawn uniformly from this range.
    pub difficulty_range: (f64, f64),
    /// Noise on the predicted difficulty relative to the true one.
    pub prediction_noise: f64,
}

impl Default for SyntheticSelftrainConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            n_labeled: 100,
            n_unlabeled: 2000,
            n_test: 1000,
            positive_rate: 0.3,
            separation: 3.0,
            difficulty_range: (0.3, 3.0),
            prediction_noise: 0.3,
        }
    }
}

/// Draws data and a split; rows are `L`, then `U`, then `T`.
pub fn generate_selftrain_data(config: &SyntheticSelftrainConfig, seed: u64) -> Result<(SelftrainData, SampleSplit)> {
    let (lo, hi) = config.difficulty_range;
    if config.dim == 0 || !(0.0 < lo && lo <= hi) || !(0.0..=1.0).contains(&config.positive_rate) {
        return Err(Error::InvalidConfig("invalid synthetic self-training config".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let centre = config.separation / libm::sqrt(config.dim as f64);
    let n = config.n_labeled + config.n_unlabeled + config.n_test;
    let mut data = SelftrainData {
        ids: Vec::with_capacity(n),
        features: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        gt_difficulty: Vec::with_capacity(n),
        pred_difficulty: Vec::with_capacity(n),
    };
    for i in 0..n {
        let label = rng.random::<f64>() < config.positive_rate;
        let spread = if lo == hi { lo } else { rng.random_range(lo..hi) };
        let mu = if label { centre } else { -centre };
        data.features
            .push((0..config.dim).map(|_| mu + spread * std_normal.sample(&mut rng)).collect());
        data.labels.push(label);
        data.gt_difficulty.push(Some(spread));
        data.pred_difficulty
            .push(Some(spread + config.prediction_noise * std_normal.sample(&mut rng)));
        data.ids.push(format!("s{i:06}"));
    }
    let (a, b) = (config.n_labeled, config.n_labeled + config.n_unlabeled);
    Ok((
        data,
        SampleSplit {
            labeled: (0..a).collect(),
            unlabeled: (a..b).collect(),
            test: (b..n).collect(),
        },
    ))
}
