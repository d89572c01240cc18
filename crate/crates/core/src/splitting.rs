//! Label-stratified partitions: an outer multilabel stratified k-fold and an
//! inner multilabel stratified shuffle split, both built on iterative
//! stratification.
//!
//! Iterative stratification repeatedly takes the label with the fewest
//! still-unassigned positives and places each of its samples in the fold
//! that most wants that label. Ties go to the fold with most remaining room,
//! then to the fold ranked first in a seeded permutation. Folds never exceed
//! their capacity, so part sizes are exact. A final pass swaps samples of
//! different label patterns between folds while that strictly lowers the
//! squared deviation of per-fold label counts from their targets.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::FieldHasher;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("cannot split {n} samples into {k} folds")]
    TooFewSamples { k: usize, n: usize },
    #[error("degenerate validation fraction {fraction} for {n} samples")]
    DegenerateFraction { fraction: f64, n: usize },
    #[error("sample `{0}` has {1} label bits, expected {2}")]
    RaggedLabels(String, usize, usize),
    #[error("duplicate sample id `{0}`")]
    DuplicateId(String),
}

/// An id with its label bits (e.g. `[y, z1..z6]` plus negative-source bits).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratSample {
    pub id: String,
    pub labels: Vec<bool>,
}

impl StratSample {
    pub fn new(id: impl Into<String>, labels: Vec<bool>) -> Self {
        Self { id: id.into(), labels }
    }
}

fn validate(samples: &[StratSample]) -> Result<usize, SplitError> {
    let width = samples.first().map_or(0, |s| s.labels.len());
    let mut seen = std::collections::HashSet::new();
    for s in samples {
        if s.labels.len() != width {
            return Err(SplitError::RaggedLabels(s.id.clone(), s.labels.len(), width));
        }
        if !seen.insert(s.id.as_str()) {
            return Err(SplitError::DuplicateId(s.id.clone()));
        }
    }
    Ok(width)
}

/// Label matrix with an extra pseudo-label column set on all-zero rows.
fn with_pseudo_label(samples: &[StratSample], width: usize) -> Vec<Vec<bool>> {
    samples
        .iter()
        .map(|s| {
            let mut row = s.labels.clone();
            row.push(!s.labels.iter().any(|b| *b));
            debug_assert_eq!(row.len(), width + 1);
            row
        })
        .collect()
}

/// Assigns each row to a fold; `capacities` sum to the row count.
fn iterative_stratify(labels: &[Vec<bool>], capacities: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = labels.len();
    let folds = capacities.len();
    let width = labels.first().map_or(0, Vec::len);
    debug_assert_eq!(capacities.iter().sum::<usize>(), n);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut fold_rank: Vec<usize> = (0..folds).collect();
    fold_rank.shuffle(rng);
    let mut priority = vec![0usize; folds];
    for (rank, &j) in fold_rank.iter().enumerate() {
        priority[j] = rank;
    }

    let mut room: Vec<usize> = capacities.to_vec();
    let mut remaining: Vec<usize> = (0..width).map(|l| labels.iter().filter(|r| r[l]).count()).collect();
    let mut desire: Vec<Vec<f64>> = remaining
        .iter()
        .map(|&count| capacities.iter().map(|&cap| count as f64 * cap as f64 / n as f64).collect())
        .collect();
    let mut assignment = vec![usize::MAX; n];
    let mut unassigned = n;

    let pick = |room: &[usize], key: &dyn Fn(usize) -> f64| -> usize {
        (0..folds)
            .filter(|&j| room[j] > 0)
            .max_by(|&a, &b| {
                key(a)
                    .total_cmp(&key(b))
                    .then(room[a].cmp(&room[b]))
                    .then(priority[b].cmp(&priority[a]))
            })
            .expect("total capacity covers every sample")
    };

    while unassigned > 0 {
        let label = (0..width).filter(|&l| remaining[l] > 0).min_by_key(|&l| (remaining[l], l));
        for &s in &order {
            if assignment[s] != usize::MAX {
                continue;
            }
            let fold = match label {
                Some(l) if labels[s][l] => {
                    let d = &desire[l];
                    pick(&room, &|j| d[j])
                }
                Some(_) => continue,
                // Rows without any label: capacity alone decides.
                None => pick(&room, &|_| 0.0),
            };
            assignment[s] = fold;
            room[fold] -= 1;
            unassigned -= 1;
            for (l, &bit) in labels[s].iter().enumerate() {
                if bit {
                    remaining[l] -= 1;
                    desire[l][fold] -= 1.0;
                }
            }
        }
    }
    refine_by_swaps(labels, capacities, &order, &mut assignment);
    assignment
}

/// Best-improvement swaps between folds. Samples sharing a label pattern are
/// interchangeable, so candidates are enumerated per (fold, pattern).
fn refine_by_swaps(labels: &[Vec<bool>], capacities: &[usize], order: &[usize], assignment: &mut [usize]) {
    let n = labels.len();
    let folds = capacities.len();
    let width = labels.first().map_or(0, Vec::len);
    if n == 0 || width == 0 {
        return;
    }

    let mut patterns: Vec<&Vec<bool>> = Vec::new();
    let mut pattern_of = vec![0usize; n];
    let mut index: HashMap<&Vec<bool>, usize> = HashMap::new();
    for (s, row) in labels.iter().enumerate() {
        pattern_of[s] = *index.entry(row).or_insert_with(|| {
            patterns.push(row);
            patterns.len() - 1
        });
    }
    // members[fold][pattern], in seeded order so the moved sample is reproducible.
    let mut members = vec![vec![Vec::new(); patterns.len()]; folds];
    for &s in order {
        members[assignment[s]][pattern_of[s]].push(s);
    }
    // dev[l][j] = count of label l in fold j minus its target.
    let mut dev: Vec<Vec<f64>> = (0..width)
        .map(|l| {
            let total = labels.iter().filter(|r| r[l]).count() as f64;
            capacities.iter().map(|&cap| -total * cap as f64 / n as f64).collect()
        })
        .collect();
    for (s, row) in labels.iter().enumerate() {
        for l in (0..width).filter(|&l| row[l]) {
            dev[l][assignment[s]] += 1.0;
        }
    }

    // Moving p from i to j and q from j to i.
    let delta = |dev: &[Vec<f64>], i: usize, j: usize, p: usize, q: usize| -> f64 {
        (0..width)
            .map(|l| match (patterns[p][l], patterns[q][l]) {
                (true, false) => 2.0 * (dev[l][j] - dev[l][i]) + 2.0,
                (false, true) => 2.0 * (dev[l][i] - dev[l][j]) + 2.0,
                _ => 0.0,
            })
            .sum()
    };

    for _ in 0..n {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..folds {
            for j in i + 1..folds {
                for p in (0..patterns.len()).filter(|&p| !members[i][p].is_empty()) {
                    for q in (0..patterns.len()).filter(|&q| q != p && !members[j][q].is_empty()) {
                        let d = delta(&dev, i, j, p, q);
                        if d < -1e-9 && best.is_none_or(|b| d < b.0) {
                            best = Some((d, i, j, p, q));
                        }
                    }
                }
            }
        }
        let Some((_, i, j, p, q)) = best else { break };
        let a = members[i][p].pop().expect("non-empty");
        let b = members[j][q].pop().expect("non-empty");
        assignment[a] = j;
        assignment[b] = i;
        members[j][p].push(a);
        members[i][q].push(b);
        for l in 0..width {
            let shift = patterns[p][l] as i32 - patterns[q][l] as i32;
            dev[l][i] -= shift as f64;
            dev[l][j] += shift as f64;
        }
    }
}

/// Sizes differing by at most one; the extra slots go to folds ranked
/// first by a seeded permutation.
fn even_capacities(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut caps = vec![n / k; k];
    let mut idx: Vec<usize> = (0..k).collect();
    idx.shuffle(rng);
    for &j in idx.iter().take(n % k) {
        caps[j] += 1;
    }
    caps
}

/// Multilabel stratified k-fold: `k` disjoint id sets covering all samples.
pub fn mskf(samples: &[StratSample], k: usize, seed: u64) -> Result<Vec<Vec<String>>, SplitError> {
    if k < 2 {
        return Err(SplitError::InvalidK(k));
    }
    if k > samples.len() {
        return Err(SplitError::TooFewSamples { k, n: samples.len() });
    }
    let width = validate(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacities = even_capacities(samples.len(), k, &mut rng);
    let assignment = iterative_stratify(&with_pseudo_label(samples, width), &capacities, &mut rng);
    let mut folds = vec![Vec::new(); k];
    for (s, fold) in samples.iter().zip(assignment) {
        folds[fold].push(s.id.clone());
    }
    Ok(folds)
}

/// Multilabel stratified shuffle split into `(train, val)`, with
/// `round(val_fraction * n)` validation samples.
pub fn mlsss(
    samples: &[StratSample],
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), SplitError> {
    let n = samples.len();
    let degenerate = SplitError::DegenerateFraction { fraction: val_fraction, n };
    if !(val_fraction > 0.0 && val_fraction < 1.0) || val_fraction * (n as f64) < 1.0 {
        return Err(degenerate);
    }
    let n_val = ((val_fraction * n as f64).round() as usize).max(1);
    if n_val >= n {
        return Err(degenerate);
    }
    let width = validate(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = iterative_stratify(&with_pseudo_label(samples, width), &[n - n_val, n_val], &mut rng);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, part) in samples.iter().zip(assignment) {
        if part == 0 { train.push(s.id.clone()) } else { val.push(s.id.clone()) }
    }
    Ok((train, val))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Part {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldParts {
    pub test: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Per-fold TRAIN/VAL/TEST assignment for every sample id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub folds: Vec<FoldParts>,
    /// Digest of the ids and label bits the plan was built from.
    pub digest: String,
}

impl FoldPlan {
    pub fn part_of(&self, fold: usize, id: &str) -> Option<Part> {
        let parts = self.folds.get(fold)?;
        if parts.test.iter().any(|x| x == id) {
            Some(Part::Test)
        } else if parts.val.iter().any(|x| x == id) {
            Some(Part::Val)
        } else if parts.train.iter().any(|x| x == id) {
            Some(Part::Train)
        } else {
            None
        }
    }

    /// id → part lookup table for one fold.
    pub fn assignments(&self, fold: usize) -> HashMap<&str, Part> {
        let parts = &self.folds[fold];
        let mut map = HashMap::new();
        for (ids, part) in [(&parts.train, Part::Train), (&parts.val, Part::Val), (&parts.test, Part::Test)] {
            for id in ids {
                map.insert(id.as_str(), part);
            }
        }
        map
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable plan")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let s = std::fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(std::io::Error::other)
    }
}

pub fn label_matrix_digest(samples: &[StratSample]) -> String {
    let mut h = FieldHasher::new();
    for s in samples {
        let bits: String = s.labels.iter().map(|b| if *b { '1' } else { '0' }).collect();
        h.field(&s.id).field(bits);
    }
    h.finish()
}

fn inner_seed(seed: u64, fold: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1)
}

/// Outer `mskf` for TEST, then `mlsss` on each complement for TRAIN/VAL.
pub fn build_fold_plan(
    samples: &[StratSample],
    k: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<FoldPlan, SplitError> {
    let tests = mskf(samples, k, seed)?;
    let position: HashMap<&str, usize> = samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut folds = Vec::with_capacity(k);
    for (i, test) in tests.into_iter().enumerate() {
        let mut in_test = vec![false; samples.len()];
        for id in &test {
            in_test[position[id.as_str()]] = true;
        }
        let rest: Vec<StratSample> = samples
            .iter()
            .zip(&in_test)
            .filter(|(_, t)| !**t)
            .map(|(s, _)| s.clone())
            .collect();
        let (train, val) = mlsss(&rest, val_fraction, inner_seed(seed, i))?;
        folds.push(FoldParts { test, train, val });
    }
    Ok(FoldPlan { k, seed, val_fraction, folds, digest: label_matrix_digest(samples) })
}
