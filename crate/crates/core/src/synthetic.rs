//! Seeded generators: sparse ground-truth similarities, sparse samples and signed links.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, Open01, WeightedIndex};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::Dirichlet;
use rayon::prelude::*;

use crate::constraints::{dense_dot, fraction_set_size, projections, top_bottom, Link};
use crate::error::{Error, Result};
use crate::model::{BasisId, Model, Sign};
use crate::sparse_data::{Dataset, SparseVector};

/// Default Dirichlet concentration for truth weights.
pub const DEFAULT_CONCENTRATION: f64 = 9.0;

fn pairs_in(len: usize) -> usize {
    len * len.saturating_sub(1) / 2
}

/// Truth model from bases whose two features lie in the same group of `groups`.
fn truth_from_groups<R: Rng + ?Sized>(
    dim: usize,
    n_bases: usize,
    groups: &[Vec<usize>],
    concentration: f64,
    rng: &mut R,
) -> Result<Model> {
    if n_bases == 0 {
        return Err(Error::Generator("need at least one basis".into()));
    }
    if !(concentration > 0.0) {
        return Err(Error::Generator(format!("concentration must be positive, got {concentration}")));
    }
    let pair_counts: Vec<usize> = groups.iter().map(|g| pairs_in(g.len())).collect();
    let available = 2 * pair_counts.iter().sum::<usize>();
    if n_bases > available {
        return Err(Error::Generator(format!("{n_bases} bases requested, only {available} available")));
    }
    let chooser = if groups.len() > 1 { Some(WeightedIndex::new(&pair_counts).expect("some pairs")) } else { None };
    let mut chosen = BTreeSet::new();
    let mut order = Vec::with_capacity(n_bases);
    while order.len() < n_bases {
        let g = &groups[chooser.as_ref().map_or(0, |c| c.sample(rng))];
        let i = g[rng.gen_range(0..g.len())];
        let j = g[rng.gen_range(0..g.len())];
        let sign = if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg };
        if i == j {
            continue;
        }
        let b = BasisId::new(i, j, sign)?;
        if chosen.insert(b) {
            order.push(b);
        }
    }
    let weights = if n_bases == 1 {
        vec![1.0]
    } else {
        Dirichlet::new(&vec![concentration; n_bases])
            .map_err(|e| Error::Generator(e.to_string()))?
            .sample(rng)
    };
    let atoms: BTreeMap<BasisId, f64> = order.into_iter().zip(weights).collect();
    Model::new(1.0, dim, atoms)
}

/// Random truth: `n_bases` distinct bases with symmetric-Dirichlet weights.
///
/// With `blocks`, both features of each basis come from one block; blocks are
/// picked in proportion to their number of feature pairs.
pub fn gen_truth<R: Rng + ?Sized>(
    dim: usize,
    n_bases: usize,
    blocks: Option<&[std::ops::Range<usize>]>,
    concentration: f64,
    rng: &mut R,
) -> Result<Model> {
    if dim < 4 {
        return Err(Error::Generator(format!("dimension must be at least 4, got {dim}")));
    }
    let groups: Vec<Vec<usize>> = match blocks {
        None => vec![(0..dim).collect()],
        Some(bs) => {
            if bs.iter().any(|b| b.end > dim) {
                return Err(Error::Generator("block outside the feature range".into()));
            }
            bs.iter().map(|b| b.clone().collect()).collect()
        }
    };
    truth_from_groups(dim, n_bases, &groups, concentration, rng)
}

/// Fraction of points using each feature.
pub fn feature_frequencies(ds: &Dataset) -> Vec<f64> {
    let mut counts = vec![0usize; ds.dim()];
    for p in ds.points() {
        for &i in p.indices() {
            counts[i as usize] += 1;
        }
    }
    let n = ds.len().max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// As [`gen_truth`], restricted to features used by at least `min_freq` of `samples`.
pub fn gen_truth_frequent<R: Rng + ?Sized>(
    dim: usize,
    n_bases: usize,
    samples: &Dataset,
    min_freq: f64,
    concentration: f64,
    rng: &mut R,
) -> Result<Model> {
    if samples.dim() != dim {
        return Err(Error::DimensionMismatch { left: dim, right: samples.dim() });
    }
    let frequent: Vec<usize> = feature_frequencies(samples)
        .iter()
        .enumerate()
        .filter(|(_, &f)| f >= min_freq)
        .map(|(i, _)| i)
        .collect();
    if frequent.len() < 2 {
        return Err(Error::Generator(format!(
            "only {} features reach frequency {min_freq}",
            frequent.len()
        )));
    }
    truth_from_groups(dim, n_bases, &[frequent], concentration, rng)
}

fn point_from<R: Rng + ?Sized>(dim: usize, mut idx: Vec<usize>, rng: &mut R) -> SparseVector {
    idx.sort_unstable();
    let entries: Vec<(usize, f64)> = idx.into_iter().map(|i| (i, rng.sample(Open01))).collect();
    SparseVector::new(dim, entries).expect("sorted in-range entries")
}

/// `n` points with `ceil(sparsity * dim)` random features each, values uniform in (0, 1).
pub fn gen_uniform_sparse<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    sparsity: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::Generator(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    let k = ((sparsity * dim as f64).ceil() as usize).min(dim);
    let points = (0..n).map(|_| point_from(dim, sample(rng, dim, k).into_vec(), rng)).collect();
    Dataset::new(points, None, dim)
}

/// Inclusion probabilities `p_f = c (f + 1)^-exponent` with mean count `avg_sparsity * dim`.
pub fn powerlaw_probabilities(dim: usize, avg_sparsity: f64, exponent: f64) -> Result<Vec<f64>> {
    let target = avg_sparsity * dim as f64;
    if !(target >= 1.0) || avg_sparsity > 1.0 {
        return Err(Error::Generator(format!("average count {target} must be at least 1")));
    }
    let w: Vec<f64> = (0..dim).map(|f| ((f + 1) as f64).powf(-exponent)).collect();
    let scale = target / w.iter().sum::<f64>();
    if scale * w[0] > 1.0 {
        return Err(Error::Generator(format!(
            "exponent {exponent} needs an inclusion probability of {:.3} for the top feature",
            scale * w[0]
        )));
    }
    Ok(w.into_iter().map(|v| v * scale).collect())
}

/// Points whose feature `f` is present independently with probability
/// proportional to `(f + 1)^-exponent`, values uniform in (0, 1).
pub fn gen_powerlaw_sparse<R: Rng + ?Sized>(
    n: usize,
    dim: usize,
    avg_sparsity: f64,
    exponent: f64,
    rng: &mut R,
) -> Result<Dataset> {
    let p = powerlaw_probabilities(dim, avg_sparsity, exponent)?;
    let points = (0..n)
        .map(|_| {
            let idx: Vec<usize> = (0..dim).filter(|&f| rng.gen_bool(p[f])).collect();
            point_from(dim, idx, rng)
        })
        .collect();
    Dataset::new(points, None, dim)
}

/// Balanced signed links: `+1` pairs where one end ranks in the other's top
/// `top_frac` under the truth similarity, `-1` for the bottom `top_frac`.
/// Pairs qualifying for both labels are dropped. Returned with `a < b`, shuffled.
pub fn gen_links<R: Rng + ?Sized>(
    samples: &Dataset,
    truth: &Model,
    n_links: usize,
    top_frac: f64,
    rng: &mut R,
) -> Result<Vec<Link>> {
    if !(top_frac > 0.0 && top_frac < 0.5) {
        return Err(Error::Generator(format!("top fraction must lie in (0, 0.5), got {top_frac}")));
    }
    let n = samples.len();
    let size = fraction_set_size(top_frac, n);
    if n < 3 || 2 * size > n - 1 {
        return Err(Error::Generator(format!("{n} samples are too few for fraction {top_frac}")));
    }
    let proj = projections(samples, truth)?;
    let sets: Vec<(Vec<usize>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let sims: Vec<f64> = proj.iter().map(|p| dense_dot(&proj[a], p)).collect();
            top_bottom(a, &sims, size)
        })
        .collect();
    let canon = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    let mut pos = BTreeSet::new();
    let mut neg = BTreeSet::new();
    for (a, (top, bottom)) in sets.iter().enumerate() {
        pos.extend(top.iter().map(|&b| canon(a, b)));
        neg.extend(bottom.iter().map(|&b| canon(a, b)));
    }
    let pos: Vec<(usize, usize)> = pos.difference(&neg.clone()).copied().collect();
    let neg: Vec<(usize, usize)> = neg.into_iter().filter(|p| pos.binary_search(p).is_err()).collect();
    let n_pos = n_links / 2;
    let n_neg = n_links - n_pos;
    if n_pos > pos.len() || n_neg > neg.len() {
        return Err(Error::Generator(format!(
            "{n_links} links requested, {} positive and {} negative candidates",
            pos.len(),
            neg.len()
        )));
    }
    let mut links: Vec<Link> = sample(rng, pos.len(), n_pos)
        .into_iter()
        .map(|i| Link::new(pos[i].0, pos[i].1, 1))
        .chain(sample(rng, neg.len(), n_neg).into_iter().map(|i| Link::new(neg[i].0, neg[i].1, -1)))
        .collect();
    rand::seq::SliceRandom::shuffle(&mut links[..], rng);
    Ok(links)
}
