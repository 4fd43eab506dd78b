//! k-NN error, ranking AUC and recovery metrics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::constraints::Link;
use crate::error::{Error, Result};
use crate::model::{Model, PairScorer};
use crate::sparse_data::Dataset;

/// Fraction of `test` points misclassified by a majority vote over their `k`
/// most similar `train` points. Similarity ties go to the lower train index,
/// vote ties to the smaller label.
pub fn knn_error<S: PairScorer>(sim: &S, train: &Dataset, test: &Dataset, k: usize) -> Result<f64> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Evaluation("empty train or test set".into()));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Evaluation(format!("k must lie in 1..={}, got {k}", train.len())));
    }
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch { left: train.dim(), right: test.dim() });
    }
    let (Some(tl), Some(sl)) = (train.labels(), test.labels()) else {
        return Err(Error::Evaluation("labels required on both sets".into()));
    };
    let wrong = (0..test.len())
        .into_par_iter()
        .filter(|&q| {
            let x = test.point(q);
            let mut scored: Vec<(usize, f64)> =
                train.points().iter().enumerate().map(|(j, p)| (j, sim.score(x, p))).collect();
            let order = |a: &(usize, f64), b: &(usize, f64)| {
                b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
            };
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, order);
            }
            let mut votes: BTreeMap<i64, usize> = BTreeMap::new();
            for &(j, _) in &scored[..k] {
                *votes.entry(tl[j]).or_default() += 1;
            }
            let best = votes.values().copied().max().unwrap_or(0);
            let predicted = votes.iter().find(|(_, &c)| c == best).map(|(&l, _)| l);
            predicted != Some(sl[q])
        })
        .count();
    Ok(wrong as f64 / test.len() as f64)
}

/// Items sharing one score: `(score, positives, negatives)`.
type Group = (f64, u64, u64);

/// AUC from score groups; ties count one half.
fn auc_groups(mut groups: Vec<Group>) -> Result<f64> {
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    let p: u64 = groups.iter().map(|g| g.1).sum();
    let n: u64 = groups.iter().map(|g| g.2).sum();
    if p == 0 || n == 0 {
        return Err(Error::Evaluation(format!("need positives and negatives, got {p} and {n}")));
    }
    let mut below = 0.0;
    let mut credit = 0.0;
    let mut i = 0;
    while i < groups.len() {
        let (s, mut gp, mut gn) = groups[i];
        i += 1;
        while i < groups.len() && groups[i].0 == s {
            gp += groups[i].1;
            gn += groups[i].2;
            i += 1;
        }
        credit += gp as f64 * (below + 0.5 * gn as f64);
        below += gn as f64;
    }
    Ok(credit / (p as f64 * n as f64))
}

/// Probability that a random positive outscores a random negative.
pub fn auc(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch { expected: scores.len(), got: positive.len() });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("NaN score".into()));
    }
    auc_groups(scores.iter().zip(positive).map(|(&s, &p)| (s, p as u64, !p as u64)).collect())
}

/// AUC over a universe where only `explicit` items carry a nonzero score;
/// the remaining `implicit_pos + implicit_neg` items score zero.
pub fn auc_with_zeros(explicit: &[(f64, bool)], implicit_pos: u64, implicit_neg: u64) -> Result<f64> {
    let mut groups: Vec<Group> = explicit.iter().map(|&(s, p)| (s, p as u64, !p as u64)).collect();
    groups.push((0.0, implicit_pos, implicit_neg));
    auc_groups(groups)
}

/// Features touched by the truth model.
pub fn truth_features(truth: &Model) -> BTreeSet<usize> {
    truth.active_features()
}

/// Nonzero off-diagonal entries `(i, j)`, `i < j`, of the truth matrix.
pub fn truth_entries(truth: &Model) -> BTreeSet<(usize, usize)> {
    truth.to_sparse_matrix().into_iter().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j)).collect()
}

/// Ranks features by the L1 norm of their row of `M` against the truth features.
pub fn feature_recovery_auc(model: &Model, truth: &BTreeSet<usize>) -> Result<f64> {
    let d = model.dim();
    if truth.is_empty() || truth.len() >= d || truth.iter().any(|&f| f >= d) {
        return Err(Error::Evaluation("truth features must be a non-empty proper subset".into()));
    }
    let norms = model.row_l1_norms();
    let explicit: Vec<(f64, bool)> = norms.iter().map(|(f, &s)| (s, truth.contains(f))).collect();
    let hit = norms.keys().filter(|f| truth.contains(f)).count();
    let implicit_pos = (truth.len() - hit) as u64;
    let implicit_neg = (d - norms.len()) as u64 - implicit_pos;
    auc_with_zeros(&explicit, implicit_pos, implicit_neg)
}

/// Ranks off-diagonal pairs by `|M_ij|` against the truth entries.
pub fn entry_recovery_auc(model: &Model, truth: &BTreeSet<(usize, usize)>) -> Result<f64> {
    let d = model.dim() as u64;
    let universe = d * d.saturating_sub(1) / 2;
    let truth: BTreeSet<(usize, usize)> =
        truth.iter().filter(|(i, j)| i != j).map(|&(i, j)| if i < j { (i, j) } else { (j, i) }).collect();
    if truth.is_empty() || truth.len() as u64 >= universe || truth.iter().any(|&(_, j)| j as u64 >= d) {
        return Err(Error::Evaluation("truth entries must be a non-empty proper subset".into()));
    }
    let explicit: Vec<(f64, bool)> = model
        .to_sparse_matrix()
        .into_iter()
        .filter(|&(i, j, _)| i < j)
        .map(|(i, j, v)| (v.abs(), truth.contains(&(i, j))))
        .collect();
    let hit = explicit.iter().filter(|e| e.1).count() as u64;
    let implicit_pos = truth.len() as u64 - hit;
    let implicit_neg = universe - explicit.len() as u64 - implicit_pos;
    auc_with_zeros(&explicit, implicit_pos, implicit_neg)
}

/// Scores each link by the similarity of its endpoints; positives are `y = 1`.
pub fn link_auc<S: PairScorer>(sim: &S, samples: &Dataset, links: &[Link]) -> Result<f64> {
    if let Some(l) = links.iter().find(|l| l.a >= samples.len() || l.b >= samples.len()) {
        return Err(Error::Evaluation(format!("link ({}, {}) outside {} samples", l.a, l.b, samples.len())));
    }
    let scores: Vec<f64> =
        links.par_iter().map(|l| sim.score(samples.point(l.a), samples.point(l.b))).collect();
    let positive: Vec<bool> = links.iter().map(|l| l.y == 1).collect();
    auc(&scores, &positive)
}
