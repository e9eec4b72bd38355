//! Train/validation/test partitions of an image id set.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitSpec {
    /// Half train, a quarter validation, the rest test. Fractional sizes round
    /// down so the remainder lands in the later sets.
    Random { seed: u64 },
    /// Images of `train_classes` are shuffled into train (two thirds) and
    /// validation; images of `test_classes` form the test set. Images touching
    /// both partitions, or neither, are excluded.
    ClassDisjoint {
        seed: u64,
        train_classes: BTreeSet<String>,
        test_classes: BTreeSet<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub excluded: Vec<String>,
}

fn shuffled(ids: &[&String], seed: u64) -> Vec<String> {
    let mut v: Vec<String> = ids.iter().map(|s| (*s).clone()).collect();
    v.sort();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

/// Partitions `ids`; `classes` maps each image to the classes it contains and
/// is only read by the class-disjoint rule. Every returned list is sorted.
pub fn make_splits(ids: &[String], classes: &BTreeMap<String, BTreeSet<String>>, spec: &SplitSpec) -> Result<Splits> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        let mut seen = BTreeSet::new();
        let dup = ids.iter().find(|id| !seen.insert(*id)).cloned().unwrap_or_default();
        return Err(Error::DuplicateId(dup));
    }
    let ids: Vec<&String> = unique.into_iter().collect();
    let splits = match spec {
        SplitSpec::Random { seed } => {
            let order = shuffled(&ids, *seed);
            let n_train = order.len() / 2;
            let n_val = order.len() / 4;
            let mut rest = order.into_iter();
            Splits {
                train: sorted(rest.by_ref().take(n_train).collect()),
                val: sorted(rest.by_ref().take(n_val).collect()),
                test: sorted(rest.collect()),
                excluded: Vec::new(),
            }
        }
        SplitSpec::ClassDisjoint {
            seed,
            train_classes,
            test_classes,
        } => {
            if let Some(c) = train_classes.intersection(test_classes).next() {
                return Err(Error::InvalidConfig(alloc::format!(
                    "class `{c}` is in both partitions"
                )));
            }
            let (mut train_side, mut test, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
            for id in ids {
                let present = classes.get(id.as_str());
                let has = |set: &BTreeSet<String>| present.is_some_and(|p| p.iter().any(|c| set.contains(c)));
                match (has(train_classes), has(test_classes)) {
                    (true, false) => train_side.push(id),
                    (false, true) => test.push(id.clone()),
                    _ => excluded.push(id.clone()),
                }
            }
            let order = shuffled(&train_side, *seed);
            let n_train = order.len() * 2 / 3;
            let mut rest = order.into_iter();
            Splits {
                train: sorted(rest.by_ref().take(n_train).collect()),
                val: sorted(rest.collect()),
                test,
                excluded,
            }
        }
    };
    for (name, set) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if set.is_empty() {
            return Err(Error::InvalidConfig(alloc::format!("{name} split is empty")));
        }
    }
    Ok(splits)
}
