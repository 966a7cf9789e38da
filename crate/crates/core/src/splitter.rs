//! Train/validation split that preserves per-class positive rates.
//!
//! Greedy iterative stratification: classes are visited from the rarest to
//! the most common. Each still-unassigned example carrying the class is sent
//! to the side whose remaining demand for that class is largest (demand
//! starts at `side_fraction × positives` and drops by one per assigned
//! positive, for every class the example carries). Ties go to the side with
//! more free slots, then to a seeded coin flip. Examples without any
//! positive label fill the remaining slots.
//!
//! The input is put in canonical uid order before the seeded shuffle, so the
//! result depends only on the set of inputs and the seed.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::labels::{Flags, LabelClass};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SplitError {
    #[error("need at least 10 examples, got {0}")]
    TooFewExamples(usize),
    #[error("ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("duplicate uid `{0}`")]
    DuplicateUid(String),
    #[error("uid `{0}` is not in the label set")]
    UnknownUid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassDistribution {
    pub class: LabelClass,
    pub positives: usize,
    pub full_rate: f64,
    pub train_rate: f64,
    pub val_rate: f64,
    pub train_deviation: f64,
    pub val_deviation: f64,
    /// All or none of the examples are positive; excluded from the
    /// tolerance check.
    pub degenerate: bool,
}

impl ClassDistribution {
    pub fn max_deviation(&self) -> f64 {
        self.train_deviation.max(self.val_deviation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionReport {
    pub n: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub tolerance: f64,
    pub classes: Vec<ClassDistribution>,
    /// Largest deviation over non-degenerate classes.
    pub max_deviation: f64,
    pub within_tolerance: bool,
}

impl DistributionReport {
    /// Non-degenerate classes whose deviation exceeds the tolerance.
    pub fn violations(&self) -> Vec<&ClassDistribution> {
        self.classes
            .iter()
            .filter(|c| !c.degenerate && c.max_deviation() > self.tolerance)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitResult {
    pub train_uids: Vec<String>,
    pub val_uids: Vec<String>,
    pub ratio_report: DistributionReport,
}

/// `round_half_up(ratio · n)`.
pub fn train_size(n: usize, ratio: f64) -> usize {
    // The epsilon absorbs representation error such as 0.7 · 5 = 3.4999….
    ((ratio * n as f64) + 0.5 + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Train = 0,
    Val = 1,
}

struct Assignment {
    side: Vec<Option<Side>>,
    capacity: [usize; 2],
    demand: [[f64; 5]; 2],
}

impl Assignment {
    /// Pick the open side with the larger remaining demand for `class`, then
    /// the one with more free slots, then a coin flip.
    fn choose(&self, class: Option<usize>, rng: &mut impl Rng) -> Side {
        const EPS: f64 = 1e-9;
        match self.capacity {
            [0, _] => return Side::Val,
            [_, 0] => return Side::Train,
            _ => {}
        }
        let (t, v) = match class {
            Some(k) => (self.demand[0][k], self.demand[1][k]),
            None => (0.0, 0.0),
        };
        if t > v + EPS {
            Side::Train
        } else if v > t + EPS {
            Side::Val
        } else if self.capacity[0] != self.capacity[1] {
            if self.capacity[0] > self.capacity[1] {
                Side::Train
            } else {
                Side::Val
            }
        } else if rng.random_bool(0.5) {
            Side::Train
        } else {
            Side::Val
        }
    }

    fn assign(&mut self, idx: usize, flags: &Flags, side: Side) {
        self.side[idx] = Some(side);
        self.capacity[side as usize] -= 1;
        for c in LabelClass::ALL {
            if flags.get(c) {
                self.demand[side as usize][c.index()] -= 1.0;
            }
        }
    }
}

pub fn stratified_split(
    labels: &[(String, Flags)],
    ratio: f64,
    seed: u64,
    tolerance: f64,
) -> Result<SplitResult, SplitError> {
    let n = labels.len();
    if n < 10 {
        return Err(SplitError::TooFewExamples(n));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SplitError::BadRatio(ratio));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].0.cmp(&labels[b].0));
    for w in order.windows(2) {
        if labels[w[0]].0 == labels[w[1]].0 {
            return Err(SplitError::DuplicateUid(labels[w[0]].0.clone()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n_train = train_size(n, ratio);
    let fractions = [ratio, 1.0 - ratio];

    let mut positives = [0usize; 5];
    for (_, f) in labels {
        for c in LabelClass::ALL {
            positives[c.index()] += usize::from(f.get(c));
        }
    }
    let mut demand = [[0.0f64; 5]; 2];
    for side in 0..2 {
        for k in 0..5 {
            demand[side][k] = fractions[side] * positives[k] as f64;
        }
    }

    let mut class_order: Vec<LabelClass> = LabelClass::ALL
        .into_iter()
        .filter(|c| positives[c.index()] > 0)
        .collect();
    class_order.sort_by_key(|c| (positives[c.index()], c.index()));

    let mut state = Assignment {
        side: vec![None; n],
        capacity: [n_train, n - n_train],
        demand,
    };
    for class in &class_order {
        let k = class.index();
        for &idx in &order {
            if state.side[idx].is_some() || !labels[idx].1.get(*class) {
                continue;
            }
            let side = state.choose(Some(k), &mut rng);
            state.assign(idx, &labels[idx].1, side);
        }
    }
    for &idx in &order {
        if state.side[idx].is_none() {
            let side = state.choose(None, &mut rng);
            state.assign(idx, &labels[idx].1, side);
        }
    }

    let mut train_uids = Vec::with_capacity(n_train);
    let mut val_uids = Vec::with_capacity(n - n_train);
    let mut canonical: Vec<usize> = (0..n).collect();
    canonical.sort_by(|&a, &b| labels[a].0.cmp(&labels[b].0));
    for idx in canonical {
        match state.side[idx].expect("every example is assigned") {
            Side::Train => train_uids.push(labels[idx].0.clone()),
            Side::Val => val_uids.push(labels[idx].0.clone()),
        }
    }
    let mut result = SplitResult {
        train_uids,
        val_uids,
        ratio_report: empty_report(tolerance),
    };
    result.ratio_report = check_distribution(&result, labels, tolerance)?;
    Ok(result)
}

fn empty_report(tolerance: f64) -> DistributionReport {
    DistributionReport {
        n: 0,
        n_train: 0,
        n_val: 0,
        tolerance,
        classes: Vec::new(),
        max_deviation: 0.0,
        within_tolerance: true,
    }
}

/// Recount per-class positive rates for the full set and each side of
/// `result`, independently of how the split was produced.
pub fn check_distribution(
    result: &SplitResult,
    labels: &[(String, Flags)],
    tolerance: f64,
) -> Result<DistributionReport, SplitError> {
    let by_uid: HashMap<&str, &Flags> = labels.iter().map(|(u, f)| (u.as_str(), f)).collect();
    let count = |uids: &[String]| -> Result<[usize; 5], SplitError> {
        let mut seen = HashSet::new();
        let mut pos = [0usize; 5];
        for u in uids {
            let f = by_uid
                .get(u.as_str())
                .ok_or_else(|| SplitError::UnknownUid(u.clone()))?;
            if !seen.insert(u.as_str()) {
                return Err(SplitError::DuplicateUid(u.clone()));
            }
            for c in LabelClass::ALL {
                pos[c.index()] += usize::from(f.get(c));
            }
        }
        Ok(pos)
    };
    let train = count(&result.train_uids)?;
    let val = count(&result.val_uids)?;
    let mut full = [0usize; 5];
    for (_, f) in labels {
        for c in LabelClass::ALL {
            full[c.index()] += usize::from(f.get(c));
        }
    }

    let rate = |p: usize, n: usize| if n == 0 { 0.0 } else { p as f64 / n as f64 };
    let (n, nt, nv) = (labels.len(), result.train_uids.len(), result.val_uids.len());
    let classes: Vec<ClassDistribution> = LabelClass::ALL
        .into_iter()
        .map(|c| {
            let k = c.index();
            let full_rate = rate(full[k], n);
            let train_rate = rate(train[k], nt);
            let val_rate = rate(val[k], nv);
            ClassDistribution {
                class: c,
                positives: full[k],
                full_rate,
                train_rate,
                val_rate,
                train_deviation: (train_rate - full_rate).abs(),
                val_deviation: (val_rate - full_rate).abs(),
                degenerate: full[k] == 0 || full[k] == n,
            }
        })
        .collect();
    let max_deviation = classes
        .iter()
        .filter(|c| !c.degenerate)
        .map(ClassDistribution::max_deviation)
        .fold(0.0, f64::max);
    Ok(DistributionReport {
        n,
        n_train: nt,
        n_val: nv,
        tolerance,
        classes,
        max_deviation,
        within_tolerance: max_deviation <= tolerance,
    })
}

/// A uniformly random split of the same size, for comparison.
pub fn random_split(labels: &[(String, Flags)], ratio: f64, seed: u64) -> SplitResult {
    let mut uids: Vec<String> = labels.iter().map(|(u, _)| u.clone()).collect();
    uids.sort();
    uids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val_uids = uids.split_off(train_size(labels.len(), ratio));
    SplitResult {
        train_uids: uids,
        val_uids,
        ratio_report: empty_report(0.0),
    }
}
