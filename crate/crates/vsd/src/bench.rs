//! Synthetic benchmarks for the curriculum and self-training experiments, and
//! the small synthetic data sets checked in for tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use vsd_core::features::FeatureMatrix;
use vsd_core::mil::{generate_synthetic_bags, run_mil, MilParams, Schedule, SyntheticMilConfig};
use vsd_core::selftrain::{
    generate_selftrain_data, selftrain_run, summarize_trajectories, Heuristic, SelftrainParams,
    SyntheticSelftrainConfig, TrajectorySummary,
};

use crate::error::Result;

/// CorLoc trajectories of both schedules on one generated benchmark. Index 0
/// is the initial classifier, then one entry per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MilSeedResult {
    pub seed: u64,
    pub standard: Vec<f64>,
    pub easy_to_hard: Vec<f64>,
}

impl MilSeedResult {
    pub fn gain(&self) -> f64 {
        self.easy_to_hard.last().unwrap_or(&0.0) - self.standard.last().unwrap_or(&0.0)
    }
}

pub fn mil_seed(config: &SyntheticMilConfig, params: &MilParams, seed: u64) -> Result<MilSeedResult> {
    let mil = generate_synthetic_bags(config, seed)?;
    let trajectory = |schedule| -> Result<Vec<f64>> {
        let mut positives = mil.positives.clone();
        let run = run_mil(&mut positives, &mil.negatives, &mil.ground_truth, schedule, params)?;
        Ok(std::iter::once(run.initial_corloc).chain(run.corloc).collect())
    };
    Ok(MilSeedResult {
        seed,
        standard: trajectory(Schedule::STANDARD)?,
        easy_to_hard: trajectory(Schedule::EASY_TO_HARD)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilBench {
    pub runs: Vec<MilSeedResult>,
}

impl MilBench {
    /// Seeds where the curriculum ends at least as well as the standard loop.
    pub fn n_not_worse(&self) -> usize {
        self.runs.iter().filter(|r| r.gain() >= 0.0).count()
    }

    pub fn mean_gain(&self) -> f64 {
        self.runs.iter().map(MilSeedResult::gain).sum::<f64>() / self.runs.len().max(1) as f64
    }

    pub fn summaries(&self) -> Result<(TrajectorySummary, TrajectorySummary)> {
        let std: Vec<Vec<f64>> = self.runs.iter().map(|r| r.standard.clone()).collect();
        let e2h: Vec<Vec<f64>> = self.runs.iter().map(|r| r.easy_to_hard.clone()).collect();
        Ok((summarize_trajectories(&std)?, summarize_trajectories(&e2h)?))
    }
}

/// Seeds run in parallel; results come back in seed order.
pub fn mil_bench(config: &SyntheticMilConfig, params: &MilParams, seeds: &[u64]) -> Result<MilBench> {
    let runs = seeds
        .par_iter()
        .map(|&s| mil_seed(config, params, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(MilBench { runs })
}

/// Settings of the self-training benchmark: the defaults with a first stage
/// narrow enough that the two-stage heuristic differs from a plain difficulty
/// ranking.
pub fn selftrain_bench_params() -> SelftrainParams {
    SelftrainParams {
        big_k: 500,
        ..SelftrainParams::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftrainBench {
    pub seeds: Vec<u64>,
    /// Test AP trajectory per heuristic and seed.
    pub runs: BTreeMap<Heuristic, Vec<Vec<f64>>>,
}

impl SelftrainBench {
    pub fn summary(&self, h: Heuristic) -> Result<TrajectorySummary> {
        Ok(summarize_trajectories(&self.runs[&h])?)
    }

    /// Mean of the final AP over seeds.
    pub fn mean_final(&self, h: Heuristic) -> f64 {
        let runs = &self.runs[&h];
        runs.iter().map(|r| *r.last().unwrap_or(&0.0)).sum::<f64>() / runs.len().max(1) as f64
    }

    /// Mean AP before any self-training.
    pub fn mean_baseline(&self) -> f64 {
        let runs = self.runs.values().next().map_or(&[][..], Vec::as_slice);
        runs.iter().map(|r| r[0]).sum::<f64>() / runs.len().max(1) as f64
    }
}

pub fn selftrain_bench(
    config: &SyntheticSelftrainConfig,
    params: &SelftrainParams,
    heuristics: &[Heuristic],
    seeds: &[u64],
) -> Result<SelftrainBench> {
    let per_seed = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<Vec<f64>>> {
            let (data, split) = generate_selftrain_data(config, seed)?;
            let p = SelftrainParams { seed, ..*params };
            heuristics
                .iter()
                .map(|&h| Ok(selftrain_run(&data, &split, h, &p)?.ap))
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs: BTreeMap<Heuristic, Vec<Vec<f64>>> = BTreeMap::new();
    for seed_runs in per_seed {
        for (h, ap) in heuristics.iter().zip(seed_runs) {
            runs.entry(*h).or_default().push(ap);
        }
    }
    Ok(SelftrainBench {
        seeds: seeds.to_vec(),
        runs,
    })
}

/// A small regression problem: `n` images with `dim` features and a
/// difficulty that is a noisy linear function of them.
pub fn synthetic_regression(n: usize, dim: usize, seed: u64) -> Result<(FeatureMatrix, Vec<(String, f64)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut ids = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * dim);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f32> = (0..dim).map(|_| rng.random_range(0.0f32..1.0)).collect();
        let clean: f64 = x.iter().zip(&w).map(|(a, b)| f64::from(*a) * b).sum();
        let id = format!("syn{i:04}");
        scores.push((id.clone(), 3.0 + clean + rng.random_range(-0.05..0.05)));
        ids.push(id);
        values.extend(x);
    }
    Ok((FeatureMatrix::new(ids, dim, values, None)?, scores))
}
