//! Deterministic index partitions: 70/30 holdout, 70/15/15 three-way and
//! repeated k-fold cross-validation.
//!
//! Every scheme is a pure function of `(n, seed)`: a seeded shuffle followed
//! by slicing. Train size is `floor(ratio * n)`; the remainder is split
//! evenly with earlier parts taking the extra element.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which protocol produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    Holdout7030,
    ThreeWay701515,
    RepeatedCv { folds: usize, repeats: usize },
}

/// One train/validation/test index partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    pub scheme: SplitScheme,
}

impl SplitPlan {
    /// Total number of indices covered by the plan.
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn shuffled_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// 70/30 train/test split.
pub fn holdout(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 2 {
        return Err(Error::invalid(format!("holdout needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = shuffled_indices(n, &mut rng);
    let cut = (0.7 * n as f64).floor() as usize;
    Ok(SplitPlan {
        train: idx[..cut].to_vec(),
        validation: Vec::new(),
        test: idx[cut..].to_vec(),
        seed,
        scheme: SplitScheme::Holdout7030,
    })
}

/// 70/15/15 train/validation/test split. The 30% remainder is halved, with
/// validation taking the extra element when it is odd.
pub fn three_way(n: usize, seed: u64) -> Result<SplitPlan> {
    if n < 3 {
        return Err(Error::invalid(format!("three_way needs n >= 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = shuffled_indices(n, &mut rng);
    let train_len = (0.7 * n as f64).floor() as usize;
    let rest = n - train_len;
    let val_len = rest.div_ceil(2);
    Ok(SplitPlan {
        train: idx[..train_len].to_vec(),
        validation: idx[train_len..train_len + val_len].to_vec(),
        test: idx[train_len + val_len..].to_vec(),
        seed,
        scheme: SplitScheme::ThreeWay701515,
    })
}

/// `repeats` independent seeded shufflings, each partitioned into `folds`
/// near-equal folds. Yields `folds * repeats` plans: each fold in turn is
/// the test set, the rest the training set.
pub fn repeated_cv(n: usize, folds: usize, repeats: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if repeats < 1 {
        return Err(Error::invalid("need at least 1 repeat"));
    }
    if n < folds {
        return Err(Error::invalid(format!(
            "repeated_cv needs n >= folds, got n={n}, folds={folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::with_capacity(folds * repeats);
    for _ in 0..repeats {
        let idx = shuffled_indices(n, &mut rng);
        let bounds = fold_bounds(n, folds);
        for &(lo, hi) in &bounds {
            let test: Vec<usize> = idx[lo..hi].to_vec();
            let train: Vec<usize> = idx[..lo].iter().chain(idx[hi..].iter()).copied().collect();
            plans.push(SplitPlan {
                train,
                validation: Vec::new(),
                test,
                seed,
                scheme: SplitScheme::RepeatedCv { folds, repeats },
            });
        }
    }
    Ok(plans)
}

/// Like [`repeated_cv`] but partitioning an explicit index subset, used when
/// cross-validation is restricted to the 70% training side of a holdout.
pub fn repeated_cv_subset(
    indices: &[usize],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    let plans = repeated_cv(indices.len(), folds, repeats, seed)?;
    Ok(plans
        .into_iter()
        .map(|p| SplitPlan {
            train: p.train.iter().map(|&i| indices[i]).collect(),
            validation: Vec::new(),
            test: p.test.iter().map(|&i| indices[i]).collect(),
            seed: p.seed,
            scheme: p.scheme,
        })
        .collect())
}

fn fold_bounds(n: usize, folds: usize) -> Vec<(usize, usize)> {
    let base = n / folds;
    let extra = n % folds;
    let mut bounds = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        bounds.push((start, start + len));
        start += len;
    }
    bounds
}

/// Stratified 70/30 holdout: the class proportions of `labels` are
/// preserved in both parts. Off the default paths; exposed for ablation.
pub fn holdout_stratified(labels: &[f64], seed: u64) -> Result<SplitPlan> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::invalid(format!("holdout needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for group in class_groups(labels, &mut rng) {
        let cut = (0.7 * group.len() as f64).floor() as usize;
        train.extend_from_slice(&group[..cut]);
        test.extend_from_slice(&group[cut..]);
    }
    Ok(SplitPlan {
        train,
        validation: Vec::new(),
        test,
        seed,
        scheme: SplitScheme::Holdout7030,
    })
}

/// Stratified 70/15/15 split over `labels`.
pub fn three_way_stratified(labels: &[f64], seed: u64) -> Result<SplitPlan> {
    let n = labels.len();
    if n < 3 {
        return Err(Error::invalid(format!("three_way needs n >= 3, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for group in class_groups(labels, &mut rng) {
        let train_len = (0.7 * group.len() as f64).floor() as usize;
        let rest = group.len() - train_len;
        let val_len = rest.div_ceil(2);
        train.extend_from_slice(&group[..train_len]);
        validation.extend_from_slice(&group[train_len..train_len + val_len]);
        test.extend_from_slice(&group[train_len + val_len..]);
    }
    Ok(SplitPlan {
        train,
        validation,
        test,
        seed,
        scheme: SplitScheme::ThreeWay701515,
    })
}

/// Stratified repeated cross-validation: within each repeat, every class is
/// dealt round-robin across folds after a seeded shuffle.
pub fn repeated_cv_stratified(
    labels: &[f64],
    folds: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<SplitPlan>> {
    let n = labels.len();
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::invalid(format!(
            "repeated_cv needs n >= folds, got n={n}, folds={folds}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plans = Vec::with_capacity(folds * repeats);
    for _ in 0..repeats {
        let mut fold_of = vec![0usize; n];
        let mut next_fold = 0usize;
        for group in class_groups(labels, &mut rng) {
            for &i in &group {
                fold_of[i] = next_fold;
                next_fold = (next_fold + 1) % folds;
            }
        }
        for f in 0..folds {
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
            plans.push(SplitPlan {
                train,
                validation: Vec::new(),
                test,
                seed,
                scheme: SplitScheme::RepeatedCv { folds, repeats },
            });
        }
    }
    Ok(plans)
}

fn class_groups(labels: &[f64], rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut distinct: Vec<u64> = labels.iter().map(|v| v.to_bits()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    distinct
        .into_iter()
        .map(|bits| {
            let mut group: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i].to_bits() == bits)
                .collect();
            group.shuffle(rng);
            group
        })
        .collect()
}
