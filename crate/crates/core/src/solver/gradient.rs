//! Gradient accumulation over constraints and the linear minimization oracles.
//!
//! With `G = (1/|S|) sum_{t in S} g_t x_t d_t^T`, every basis score is
//! `<B, grad f> = lambda (c_i + c_j + s H_ij)` where `c_i = G_ii` and
//! `H_ij = G_ij + G_ji`. Only pairs that co-occur in some active constraint
//! have `H_ij != 0`; all other pairs score `lambda (c_i + c_j)`.

use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
use crate::model::{BasisId, Sign};
use crate::objective::{smoothed_hinge_deriv, ConstraintSet, MarginCache};

#[inline]
fn pair_key(i: u32, j: u32) -> u64 {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    ((a as u64) << 32) | b as u64
}

#[inline]
fn unpack(key: u64) -> (u32, u32) {
    ((key >> 32) as u32, key as u32)
}

/// Diagonal `c` and symmetric off-diagonal `H` of the (sub-sampled) gradient.
#[derive(Debug, Clone, Default)]
pub struct GradientAccumulators {
    diag: FxHashMap<u32, f64>,
    offdiag: FxHashMap<u64, f64>,
}

impl GradientAccumulators {
    pub fn diag(&self, i: usize) -> f64 {
        self.diag.get(&(i as u32)).copied().unwrap_or(0.0)
    }

    /// `H_ij`, symmetric in its arguments.
    pub fn offdiag(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.offdiag.get(&pair_key(i as u32, j as u32)).copied().unwrap_or(0.0)
    }

    pub fn diag_entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.diag.iter().map(|(&i, &v)| (i as usize, v))
    }

    /// Stored `((i, j), H_ij)` with `i < j`.
    pub fn offdiag_entries(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.offdiag.iter().map(|(&k, &v)| {
            let (i, j) = unpack(k);
            ((i as usize, j as usize), v)
        })
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty() && self.offdiag.is_empty()
    }

    /// `<B, grad f>` reconstructed from the accumulators.
    pub fn score(&self, b: BasisId, lambda: f64) -> f64 {
        lambda * (self.diag(b.i()) + self.diag(b.j()) + b.sign().value() * self.offdiag(b.i(), b.j()))
    }
}

/// Accumulates `c` and `H` over `subset` (all constraints when `None`),
/// normalized by the size of the set. Satisfied constraints are skipped.
pub fn gradient_accumulate(
    cs: &ConstraintSet<'_>,
    cache: &MarginCache,
    subset: Option<&[usize]>,
) -> GradientAccumulators {
    let mut acc = GradientAccumulators::default();
    let margins = cache.margins();
    let mut visit = |t: usize, norm: f64| {
        let g = smoothed_hinge_deriv(margins[t]);
        if g == 0.0 {
            return;
        }
        let x = cs.anchor(t);
        let d = cs.diff(t);
        let gn = g * norm;
        for (&p, &xp) in x.indices().iter().zip(x.values()) {
            let w = gn * xp;
            for (&q, &dq) in d.indices().iter().zip(d.values()) {
                if p == q {
                    *acc.diag.entry(p).or_insert(0.0) += w * dq;
                } else {
                    *acc.offdiag.entry(pair_key(p, q)).or_insert(0.0) += w * dq;
                }
            }
        }
    };
    match subset {
        None => {
            let norm = 1.0 / cs.len().max(1) as f64;
            (0..cs.len()).for_each(|t| visit(t, norm));
        }
        Some(idx) => {
            let norm = 1.0 / idx.len().max(1) as f64;
            idx.iter().for_each(|&t| visit(t, norm));
        }
    }
    acc
}

/// A basis together with its (possibly estimated) score `<B, grad f>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBasis {
    pub basis: BasisId,
    pub score: f64,
}

impl ScoredBasis {
    /// Lower score wins; equal scores fall back to the basis ordering.
    pub fn better_than(&self, other: &ScoredBasis) -> bool {
        self.score < other.score || (self.score == other.score && self.basis < other.basis)
    }
}

fn keep_best(best: &mut Option<ScoredBasis>, cand: ScoredBasis) {
    match best {
        Some(b) if !cand.better_than(b) => {}
        _ => *best = Some(cand),
    }
}

/// All `d` features in `(c value, index)` order, without materializing the
/// zero-valued ones.
struct FeatureOrder<'a> {
    negatives: &'a [(f64, u32)],
    positives: &'a [(f64, u32)],
    nonzero_sorted: &'a [u32],
    dim: usize,
}

impl<'a> FeatureOrder<'a> {
    fn iter(&self) -> impl Iterator<Item = (f64, usize)> + 'a {
        let nonzero = self.nonzero_sorted;
        let mut skip = 0usize;
        let zeros = (0..self.dim).filter(move |&i| {
            while skip < nonzero.len() && (nonzero[skip] as usize) < i {
                skip += 1;
            }
            !(skip < nonzero.len() && nonzero[skip] as usize == i)
        });
        self.negatives
            .iter()
            .map(|&(v, i)| (v, i as usize))
            .chain(zeros.map(|i| (0.0, i)))
            .chain(self.positives.iter().map(|&(v, i)| (v, i as usize)))
    }
}

/// Diagonal values split by sign and sorted, plus the index set of nonzeros.
struct SortedDiag {
    negatives: Vec<(f64, u32)>,
    positives: Vec<(f64, u32)>,
    nonzero_sorted: Vec<u32>,
}

impl SortedDiag {
    fn new(diag: &FxHashMap<u32, f64>) -> Self {
        let mut negatives = Vec::new();
        let mut positives = Vec::new();
        for (&i, &v) in diag {
            if v < 0.0 {
                negatives.push((v, i));
            } else if v > 0.0 {
                positives.push((v, i));
            }
        }
        let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        negatives.sort_unstable_by(cmp);
        positives.sort_unstable_by(cmp);
        let mut nonzero_sorted: Vec<u32> =
            negatives.iter().chain(&positives).map(|&(_, i)| i).collect();
        nonzero_sorted.sort_unstable();
        Self { negatives, positives, nonzero_sorted }
    }

    fn order(&self, dim: usize) -> FeatureOrder<'_> {
        FeatureOrder {
            negatives: &self.negatives,
            positives: &self.positives,
            nonzero_sorted: &self.nonzero_sorted,
            dim,
        }
    }
}

/// Smallest-value partner `j != i` for which `coupled(i, j)` is false.
fn best_partner(
    order: &FeatureOrder<'_>,
    i: usize,
    coupled: impl Fn(usize, usize) -> bool,
) -> Option<(f64, usize)> {
    order.iter().find(|&(_, j)| j != i && !coupled(i, j))
}

/// Exact `argmin_B <B, grad f>` over all `2 C(d, 2)` bases.
///
/// Candidates are every pair with `H_ij != 0` (best sign `Neg` when `H_ij > 0`)
/// and the best pair with `H_ij = 0`, which scores `lambda (c_i + c_j)` with
/// sign `Pos`. A pair with `H_ij = 0` cannot beat the same pair's coupled score,
/// so the minimum over uncoupled pairs is found by taking, for each of the first
/// `max_degree + 2` features in `(c, index)` order, its best uncoupled partner:
/// the first element of an optimal uncoupled pair is always among them.
pub fn forward_exact(acc: &GradientAccumulators, lambda: f64, dim: usize) -> Result<ScoredBasis> {
    if dim < 2 {
        return Err(Error::Domain(format!("need at least two features, got {dim}")));
    }
    let mut best: Option<ScoredBasis> = None;
    let mut degree: FxHashMap<u32, usize> = FxHashMap::default();
    for (&key, &h) in &acc.offdiag {
        if h == 0.0 {
            continue;
        }
        let (i, j) = unpack(key);
        *degree.entry(i).or_default() += 1;
        *degree.entry(j).or_default() += 1;
        let sign = if h > 0.0 { Sign::Neg } else { Sign::Pos };
        let ci = acc.diag(i as usize);
        let cj = acc.diag(j as usize);
        let score = lambda * (ci + cj - h.abs());
        keep_best(&mut best, ScoredBasis { basis: BasisId::new(i as usize, j as usize, sign)?, score });
    }
    let max_degree = degree.values().copied().max().unwrap_or(0);
    let sorted = SortedDiag::new(&acc.diag);
    let order = sorted.order(dim);
    let coupled = |i: usize, j: usize| acc.offdiag(i, j) != 0.0;
    for (ci, i) in order.iter().take(max_degree + 2) {
        if let Some((cj, j)) = best_partner(&order, i, coupled) {
            let score = lambda * (ci + cj);
            keep_best(&mut best, ScoredBasis { basis: BasisId::new(i, j, Sign::Pos)?, score });
        }
    }
    best.ok_or_else(|| Error::Domain("no basis available".into()))
}

/// Diagonal over all features and one row of `H`, from a (sub)set of constraints.
#[derive(Debug, Clone, Default)]
pub(crate) struct RowAccumulators {
    diag: FxHashMap<u32, f64>,
}

impl RowAccumulators {
    pub(crate) fn diag_only(cs: &ConstraintSet<'_>, cache: &MarginCache, subset: &[usize]) -> Self {
        let mut diag: FxHashMap<u32, f64> = FxHashMap::default();
        let norm = 1.0 / subset.len().max(1) as f64;
        for &t in subset {
            let g = smoothed_hinge_deriv(cache.margins()[t]);
            if g == 0.0 {
                continue;
            }
            let (x, d) = (cs.anchor(t), cs.diff(t));
            let (xi, xv, di, dv) = (x.indices(), x.values(), d.indices(), d.values());
            let (mut p, mut q) = (0, 0);
            while p < xi.len() && q < di.len() {
                match xi[p].cmp(&di[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        *diag.entry(xi[p]).or_insert(0.0) += g * norm * xv[p] * dv[q];
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
        Self { diag }
    }

    /// `H_ij` for the fixed `i` and every `j` that co-occurs with it.
    pub(crate) fn row(
        cs: &ConstraintSet<'_>,
        cache: &MarginCache,
        subset: &[usize],
        i: usize,
    ) -> FxHashMap<u32, f64> {
        let mut row: FxHashMap<u32, f64> = FxHashMap::default();
        let norm = 1.0 / subset.len().max(1) as f64;
        for &t in subset {
            let g = smoothed_hinge_deriv(cache.margins()[t]);
            if g == 0.0 {
                continue;
            }
            let (x, d) = (cs.anchor(t), cs.diff(t));
            let xi = x.get(i);
            if xi != 0.0 {
                for (q, dq) in d.iter() {
                    if q != i {
                        *row.entry(q as u32).or_insert(0.0) += g * norm * xi * dq;
                    }
                }
            }
            let di = d.get(i);
            if di != 0.0 {
                for (p, xp) in x.iter() {
                    if p != i {
                        *row.entry(p as u32).or_insert(0.0) += g * norm * di * xp;
                    }
                }
            }
        }
        row
    }

    pub(crate) fn diag(&self, i: usize) -> f64 {
        self.diag.get(&(i as u32)).copied().unwrap_or(0.0)
    }
}

/// Best basis among the pairs containing `i`, given the diagonal and row `i` of `H`.
pub(crate) fn best_in_row(
    diag: &RowAccumulators,
    row: &FxHashMap<u32, f64>,
    i: usize,
    lambda: f64,
    dim: usize,
) -> Result<ScoredBasis> {
    if dim < 2 {
        return Err(Error::Domain(format!("need at least two features, got {dim}")));
    }
    let ci = diag.diag(i);
    let mut best: Option<ScoredBasis> = None;
    let mut coupled: FxHashSet<u32> = FxHashSet::default();
    for (&j, &h) in row {
        if h == 0.0 {
            continue;
        }
        coupled.insert(j);
        let sign = if h > 0.0 { Sign::Neg } else { Sign::Pos };
        let score = lambda * (ci + diag.diag(j as usize) - h.abs());
        keep_best(&mut best, ScoredBasis { basis: BasisId::new(i, j as usize, sign)?, score });
    }
    let sorted = SortedDiag::new(&diag.diag);
    let order = sorted.order(dim);
    if let Some((cj, j)) = best_partner(&order, i, |_, j| coupled.contains(&(j as u32))) {
        let score = lambda * (ci + cj);
        keep_best(&mut best, ScoredBasis { basis: BasisId::new(i, j, Sign::Pos)?, score });
    }
    best.ok_or_else(|| Error::Domain("no basis available".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc(diag: &[(u32, f64)], off: &[((u32, u32), f64)]) -> GradientAccumulators {
        GradientAccumulators {
            diag: diag.iter().copied().collect(),
            offdiag: off.iter().map(|&((i, j), v)| (pair_key(i, j), v)).collect(),
        }
    }

    #[test]
    fn coupled_pair_wins() {
        let a = acc(&[], &[((0, 1), -1.0)]);
        let best = forward_exact(&a, 1.0, 5).unwrap();
        assert_eq!(best.basis, BasisId::pos(0, 1));
        assert_eq!(best.score, -1.0);
    }

    #[test]
    fn two_smallest_diagonals() {
        let a = acc(&[(3, -0.4), (7, -0.1)], &[]);
        let best = forward_exact(&a, 10.0, 20).unwrap();
        assert_eq!(best.basis, BasisId::pos(3, 7));
        assert!((best.score - -5.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gradient_picks_first_basis() {
        let best = forward_exact(&GradientAccumulators::default(), 3.0, 4).unwrap();
        assert_eq!(best.basis, BasisId::pos(0, 1));
        assert_eq!(best.score, 0.0);
        assert!(forward_exact(&GradientAccumulators::default(), 1.0, 1).is_err());
    }

    #[test]
    fn skips_coupled_pair_among_zero_diagonals() {
        // (0, 1) is coupled with a positive-score H; best uncoupled zero pair is (0, 2)
        let a = acc(&[], &[((0, 1), 0.0), ((0, 2), 1e-300)]);
        let best = forward_exact(&a, 1.0, 4).unwrap();
        assert_eq!(best.score, -1e-300);
        assert_eq!(best.basis, BasisId::neg(0, 2));
    }

    #[test]
    fn row_search_prefers_coupled_partner() {
        let diag = RowAccumulators { diag: [(2u32, -0.1)].into_iter().collect() };
        let row: FxHashMap<u32, f64> = [(5u32, 0.8)].into_iter().collect();
        let best = best_in_row(&diag, &row, 0, 1.0, 10).unwrap();
        assert_eq!(best.basis, BasisId::neg(0, 5));
        assert!((best.score - -0.8).abs() < 1e-15);
    }
}
