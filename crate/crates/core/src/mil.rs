//! Multiple-instance learning for weakly supervised localization, with an
//! optional easy-to-hard curriculum over positive images.
//!
//! A positive bag is an image known to contain the class; its instances are
//! candidate windows. Training alternates between picking the top-scoring
//! window in every active positive bag and retraining a linear SVM on those
//! picks against hard-mined windows from negative bags. Ground-truth boxes
//! live in a separate map that only [`evaluate_corloc`] reads.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::metrics::{corloc, BBox, CorLocReport};
use crate::regression::{linear_svc_fit, RegressionModel, SvcParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WindowInstance {
    pub bbox: BBox,
    pub features: Vec<f64>,
    /// Decision value under the most recent classifier.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub image_id: String,
    pub positive: bool,
    pub instances: Vec<WindowInstance>,
    pub difficulty: f64,
}

/// Target boxes per positive image, for evaluation only.
pub type GroundTruth = BTreeMap<String, Vec<BBox>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMilConfig {
    pub n_positive: usize,
    pub n_negative: usize,
    pub instances_per_bag: usize,
    /// Class signal added to the one true window of each positive bag; its
    /// length sets the feature dimension.
    pub signal: Vec<f64>,
    /// Noise standard deviation per difficulty tier. Bag `i` of either label
    /// uses tier `i % tiers.len()` for all of its windows.
    pub noise_tiers: Vec<f64>,
    /// Clutter direction that co-occurs with the class: it is added to some
    /// distractor windows of positive bags and never appears in negatives.
    /// Empty for none.
    pub context: Vec<f64>,
    /// Context scale per tier, indexed like `noise_tiers`.
    pub context_tiers: Vec<f64>,
    /// Probability that a distractor window carries the context.
    pub context_rate: f64,
}

impl SyntheticMilConfig {
    /// 200 + 200 bags of 50 windows in 64 dimensions over three tiers. Harder
    /// tiers are noisier and more cluttered with class context, so a
    /// classifier fit on every image at once is pulled toward the context.
    pub fn tiered() -> Self {
        Self {
            n_positive: 200,
            n_negative: 200,
            instances_per_bag: 50,
            signal: uniform_signal(64, 3.0),
            noise_tiers: alloc::vec![0.35, 0.7, 1.4],
            context: contrast_pattern(64),
            context_tiers: alloc::vec![0.0, 2.0, 4.0],
            context_rate: 0.1,
        }
    }

    pub fn noise_free() -> Self {
        Self {
            noise_tiers: alloc::vec![0.0],
            context_tiers: alloc::vec![0.0],
            ..Self::tiered()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_positive == 0 || self.n_negative == 0 {
            return Err(Error::InvalidConfig("need at least one bag of each label".into()));
        }
        if self.instances_per_bag == 0 || self.instances_per_bag > GRID_CELLS * GRID_CELLS {
            return Err(Error::InvalidConfig(format!(
                "instances_per_bag must lie in 1..={}",
                GRID_CELLS * GRID_CELLS
            )));
        }
        if self.signal.is_empty() || self.signal.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("signal must be a non-empty finite vector".into()));
        }
        if self.noise_tiers.is_empty() || self.noise_tiers.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidConfig("noise tiers must be non-negative".into()));
        }
        if !self.context.is_empty() {
            if self.context.len() != self.signal.len() || self.context.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("context must be finite and as long as the signal".into()));
            }
            if self.context_tiers.len() != self.noise_tiers.len() || self.context_tiers.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig("need one finite context scale per noise tier".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.context_rate) {
            return Err(Error::InvalidConfig("context_rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Vector of `dim` equal entries with Euclidean norm `strength`.
pub fn uniform_signal(dim: usize, strength: f64) -> Vec<f64> {
    alloc::vec![strength / libm::sqrt(dim as f64); dim]
}

/// Unit vector of alternating signs; orthogonal to [`uniform_signal`] when
/// `dim` is even.
pub fn contrast_pattern(dim: usize) -> Vec<f64> {
    let v = 1.0 / libm::sqrt(dim as f64);
    (0..dim).map(|i| if i % 2 == 0 { v } else { -v }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMil {
    pub positives: Vec<Bag>,
    pub negatives: Vec<Bag>,
    pub ground_truth: GroundTruth,
    /// Index of the true window in each positive bag.
    pub true_instance: Vec<usize>,
}

const IMAGE_SIDE: f64 = 1000.0;
const GRID_CELLS: usize = 10;

/// Window `i` occupies cell `i` of a 10 x 10 grid, so distinct windows never
/// overlap.
fn grid_box(i: usize) -> BBox {
    let cell = IMAGE_SIDE / GRID_CELLS as f64;
    let (cx, cy) = ((i % GRID_CELLS) as f64, (i / GRID_CELLS) as f64);
    BBox {
        xmin: cx * cell,
        ymin: cy * cell,
        xmax: (cx + 1.0) * cell,
        ymax: (cy + 1.0) * cell,
    }
}

pub fn generate_synthetic_bags(config: &SyntheticMilConfig, seed: u64) -> Result<SyntheticMil> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = config.signal.len();
    let noisy = |sigma: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        if sigma == 0.0 {
            return alloc::vec![0.0; dim];
        }
        let normal = Normal::new(0.0, sigma).expect("validated sigma");
        (0..dim).map(|_| normal.sample(rng)).collect()
    };
    let n_tiers = config.noise_tiers.len();
    let tier = |i: usize| config.noise_tiers[i % n_tiers];

    let mut positives = Vec::with_capacity(config.n_positive);
    let mut ground_truth = GroundTruth::new();
    let mut true_instance = Vec::with_capacity(config.n_positive);
    for b in 0..config.n_positive {
        let sigma = tier(b);
        let context_scale = config.context_tiers.get(b % n_tiers).copied().unwrap_or(0.0);
        let hit = rng.random_range(0..config.instances_per_bag);
        let instances = (0..config.instances_per_bag)
            .map(|i| {
                let mut features = noisy(sigma, &mut rng);
                if i == hit {
                    for (f, s) in features.iter_mut().zip(&config.signal) {
                        *f += s;
                    }
                } else if !config.context.is_empty() && rng.random::<f64>() < config.context_rate {
                    for (f, c) in features.iter_mut().zip(&config.context) {
                        *f += context_scale * c;
                    }
                }
                WindowInstance {
                    bbox: grid_box(i),
                    features,
                    score: 0.0,
                }
            })
            .collect();
        let image_id = format!("pos{b:05}");
        ground_truth.insert(image_id.clone(), alloc::vec![grid_box(hit)]);
        true_instance.push(hit);
        positives.push(Bag {
            image_id,
            positive: true,
            instances,
            difficulty: sigma,
        });
    }
    let negatives = (0..config.n_negative)
        .map(|b| {
            let sigma = tier(b);
            Bag {
                image_id: format!("neg{b:05}"),
                positive: false,
                instances: (0..config.instances_per_bag)
                    .map(|i| WindowInstance {
                        bbox: grid_box(i),
                        features: noisy(sigma, &mut rng),
                        score: 0.0,
                    })
                    .collect(),
                difficulty: sigma,
            }
        })
        .collect();
    Ok(SyntheticMil {
        positives,
        negatives,
        ground_truth,
        true_instance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilParams {
    pub svc: SvcParams,
    /// Negative windows added per mining round at most.
    pub mine_per_round: usize,
    pub mining_rounds: usize,
    /// Negatives scoring above this are margin violators.
    pub violator_threshold: f64,
}

impl Default for MilParams {
    fn default() -> Self {
        Self {
            svc: SvcParams {
                c: 1.0,
                tol: 0.1,
                ..SvcParams::default()
            },
            mine_per_round: 1000,
            mining_rounds: 5,
            violator_threshold: -1.0,
        }
    }
}

/// Negative windows, as (bag, instance) pairs, kept in the training set.
pub type NegativeCache = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct MilState {
    pub classifier: RegressionModel,
    /// Selected window per positive bag index.
    pub selections: BTreeMap<usize, usize>,
    pub iteration: usize,
    pub negative_cache: NegativeCache,
}

fn check_bags(bags: &[Bag], what: &'static str) -> Result<usize> {
    let first = bags.first().ok_or(Error::Empty(what))?;
    let dim = first.instances.first().ok_or(Error::Empty("bag instances"))?.features.len();
    for bag in bags {
        if bag.instances.is_empty() {
            return Err(Error::InvalidConfig(format!("bag `{}` has no windows", bag.image_id)));
        }
        if let Some(w) = bag.instances.iter().find(|w| w.features.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: w.features.len(),
            });
        }
    }
    Ok(dim)
}

fn bag_mean(bag: &Bag) -> Vec<f64> {
    let dim = bag.instances[0].features.len();
    let mut m = alloc::vec![0.0; dim];
    for w in &bag.instances {
        crate::linalg::axpy(1.0, &w.features, &mut m);
    }
    let n = bag.instances.len() as f64;
    m.iter().map(|v| v / n).collect()
}

/// Fits on `positive_rows` against the cached negatives, then repeatedly
/// adds the highest-scoring uncached negatives above the violator threshold.
fn train_with_mining(
    positive_rows: &[Vec<f64>],
    negatives: &[Bag],
    cache: &mut NegativeCache,
    params: &MilParams,
) -> Result<RegressionModel> {
    let mut round = 0;
    loop {
        let mut rows: Vec<&[f64]> = positive_rows.iter().map(Vec::as_slice).collect();
        rows.extend(cache.iter().map(|&(b, i)| negatives[b].instances[i].features.as_slice()));
        let labels: Vec<bool> = (0..rows.len()).map(|r| r < positive_rows.len()).collect();
        let model = linear_svc_fit(&rows, &labels, &params.svc)?;
        if round == params.mining_rounds {
            return Ok(model);
        }
        let mut violators = Vec::new();
        for (b, bag) in negatives.iter().enumerate() {
            for (i, w) in bag.instances.iter().enumerate() {
                if cache.contains(&(b, i)) {
                    continue;
                }
                let v = model.decision(&w.features)?;
                if v > params.violator_threshold {
                    violators.push((v, b, i));
                }
            }
        }
        if violators.is_empty() {
            return Ok(model);
        }
        violators.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));
        cache.extend(violators.iter().take(params.mine_per_round).map(|&(_, b, i)| (b, i)));
        round += 1;
    }
}

/// First classifier: the mean window of each given positive bag against the
/// mean window of every negative bag. Both sides are whole-image summaries,
/// so the first fit compares like with like; window-level hard mining starts
/// with the first iteration, from the first window of every negative bag.
pub fn initial_classifier(
    positives: &[Bag],
    use_bags: &[usize],
    negatives: &[Bag],
    params: &MilParams,
) -> Result<MilState> {
    check_bags(positives, "positive bags")?;
    check_bags(negatives, "negative bags")?;
    if use_bags.is_empty() {
        return Err(Error::Empty("initial positive bags"));
    }
    let mut rows: Vec<Vec<f64>> = use_bags.iter().map(|&b| bag_mean(&positives[b])).collect();
    let n_pos = rows.len();
    rows.extend(negatives.iter().map(bag_mean));
    let labels: Vec<bool> = (0..rows.len()).map(|r| r < n_pos).collect();
    let classifier = linear_svc_fit(&rows, &labels, &params.svc)?;
    Ok(MilState {
        classifier,
        selections: BTreeMap::new(),
        iteration: 0,
        negative_cache: (0..negatives.len()).map(|b| (b, 0)).collect(),
    })
}

/// Scores every window of `bag` and returns the argmax, lowest index on ties.
pub fn select_window(classifier: &RegressionModel, bag: &mut Bag) -> Result<usize> {
    let mut best = 0;
    for w in bag.instances.iter_mut() {
        w.score = classifier.decision(&w.features)?;
    }
    for (i, w) in bag.instances.iter().enumerate() {
        if w.score > bag.instances[best].score {
            best = i;
        }
    }
    Ok(best)
}

/// One relocalize-and-retrain step over the active positive bags.
pub fn mil_iterate(
    state: &mut MilState,
    positives: &mut [Bag],
    active: &[usize],
    negatives: &[Bag],
    params: &MilParams,
) -> Result<()> {
    if active.is_empty() {
        return Err(Error::Empty("active positive bags"));
    }
    let mut rows = Vec::with_capacity(active.len());
    for &b in active {
        let pick = select_window(&state.classifier, &mut positives[b])?;
        state.selections.insert(b, pick);
        rows.push(positives[b].instances[pick].features.clone());
    }
    state.classifier = train_with_mining(&rows, negatives, &mut state.negative_cache, params)?;
    state.iteration += 1;
    Ok(())
}

/// Positive bags in ascending difficulty, cut into consecutive batches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    /// Bag indices, easiest first; ties keep input order.
    pub order: Vec<usize>,
    /// Exclusive end of each batch within `order`.
    pub batch_ends: Vec<usize>,
    pub iters_per_batch: usize,
}

impl BatchPlan {
    pub fn n_iterations(&self) -> usize {
        self.batch_ends.len() * self.iters_per_batch
    }

    pub fn batch_sizes(&self) -> Vec<usize> {
        let mut start = 0;
        self.batch_ends
            .iter()
            .map(|&end| {
                let s = end - start;
                start = end;
                s
            })
            .collect()
    }

    /// Bags active at zero-based iteration `it`: every batch up to the
    /// current one.
    pub fn active_at(&self, it: usize) -> &[usize] {
        let batch = (it / self.iters_per_batch).min(self.batch_ends.len() - 1);
        &self.order[..self.batch_ends[batch]]
    }
}

/// Splits bags into `k` batches of `n / k`, with the remainder spread one
/// per batch over the last (hardest) ones.
pub fn easy_to_hard_schedule(difficulties: &[f64], k: usize, iters_per_batch: usize) -> Result<BatchPlan> {
    if k == 0 || iters_per_batch == 0 {
        return Err(Error::param("k", "batches and iterations per batch must be positive"));
    }
    if difficulties.len() < k {
        return Err(Error::NotEnoughItems {
            needed: k,
            available: difficulties.len(),
        });
    }
    if difficulties.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("bag difficulty"));
    }
    let mut order: Vec<usize> = (0..difficulties.len()).collect();
    order.sort_by(|&a, &b| difficulties[a].total_cmp(&difficulties[b]));
    let (base, extra) = (difficulties.len() / k, difficulties.len() % k);
    let mut end = 0;
    let batch_ends = (0..k)
        .map(|b| {
            end += base + usize::from(b >= k - extra);
            end
        })
        .collect();
    Ok(BatchPlan {
        order,
        batch_ends,
        iters_per_batch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Every positive bag in every iteration.
    Standard { iterations: usize },
    EasyToHard { k_batches: usize, iters_per_batch: usize },
}

impl Schedule {
    pub const STANDARD: Schedule = Schedule::Standard { iterations: 9 };
    pub const EASY_TO_HARD: Schedule = Schedule::EasyToHard {
        k_batches: 3,
        iters_per_batch: 3,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilRun {
    /// CorLoc of the initial classifier.
    pub initial_corloc: f64,
    /// CorLoc after each iteration.
    pub corloc: Vec<f64>,
    pub final_selections: BTreeMap<String, BBox>,
    pub final_classifier: RegressionModel,
}

/// Localizes every positive bag with `classifier` and scores the picks.
pub fn evaluate_corloc(
    classifier: &RegressionModel,
    positives: &mut [Bag],
    ground_truth: &GroundTruth,
) -> Result<(CorLocReport, BTreeMap<String, BBox>)> {
    let mut picks = BTreeMap::new();
    for bag in positives.iter_mut() {
        let w = select_window(classifier, bag)?;
        picks.insert(bag.image_id.clone(), bag.instances[w].bbox);
    }
    Ok((corloc(&picks, ground_truth)?, picks))
}

/// Runs the schedule from scratch. CorLoc is measured after every iteration
/// over all positive bags, not only the active ones, with the freshly
/// retrained classifier.
pub fn run_mil(
    positives: &mut [Bag],
    negatives: &[Bag],
    ground_truth: &GroundTruth,
    schedule: Schedule,
    params: &MilParams,
) -> Result<MilRun> {
    check_bags(positives, "positive bags")?;
    let all: Vec<usize> = (0..positives.len()).collect();
    let plan = match schedule {
        Schedule::Standard { iterations } => BatchPlan {
            order: all.clone(),
            batch_ends: alloc::vec![all.len()],
            iters_per_batch: iterations,
        },
        Schedule::EasyToHard {
            k_batches,
            iters_per_batch,
        } => {
            let d: Vec<f64> = positives.iter().map(|b| b.difficulty).collect();
            easy_to_hard_schedule(&d, k_batches, iters_per_batch)?
        }
    };
    let mut state = initial_classifier(positives, plan.active_at(0), negatives, params)?;
    let (initial, _) = evaluate_corloc(&state.classifier, positives, ground_truth)?;
    let mut trajectory = Vec::with_capacity(plan.n_iterations());
    let mut picks = BTreeMap::new();
    for it in 0..plan.n_iterations() {
        mil_iterate(&mut state, positives, plan.active_at(it), negatives, params)?;
        let (report, p) = evaluate_corloc(&state.classifier, positives, ground_truth)?;
        trajectory.push(report.corloc);
        picks = p;
    }
    Ok(MilRun {
        initial_corloc: initial.corloc,
        corloc: trajectory,
        final_selections: picks,
        final_classifier: state.classifier,
    })
}
