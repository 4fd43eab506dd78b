//! Forward and away directions, direction choice and the exact line search.

use rand::seq::index::sample;
use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::model::{BasisId, Model};
use crate::objective::{
    grad_inner_with_model, smoothed_hinge, smoothed_hinge_deriv, BasisInners, ConstraintSet,
    MarginCache, StepKind,
};
use crate::solver::gradient::{best_in_row, forward_exact, gradient_accumulate, RowAccumulators, ScoredBasis};

/// A candidate move from the current iterate.
///
/// `score` is `<B, grad f>` for the direction's basis; `inners` always holds
/// the exact `<A_t, B>` over the full constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub kind: StepKind,
    pub basis: BasisId,
    pub gamma_max: f64,
    pub inners: BasisInners,
    pub score: f64,
}

impl Direction {
    pub fn forward(cs: &ConstraintSet<'_>, best: ScoredBasis, lambda: f64) -> Self {
        Self {
            kind: StepKind::Forward,
            basis: best.basis,
            gamma_max: 1.0,
            inners: cs.basis_inners(best.basis, lambda),
            score: best.score,
        }
    }

    /// `<D, grad f>` given `<M, grad f>`.
    pub fn slope(&self, grad_inner: f64) -> f64 {
        match self.kind {
            StepKind::Forward => self.score - grad_inner,
            StepKind::Away => grad_inner - self.score,
        }
    }
}

/// Exact forward direction from the full gradient.
pub fn forward_full(cs: &ConstraintSet<'_>, cache: &MarginCache, lambda: f64) -> Result<Direction> {
    let acc = gradient_accumulate(cs, cache, None);
    let best = forward_exact(&acc, lambda, cs.dim())?;
    Ok(Direction::forward(cs, best, lambda))
}

fn draw_batch<R: Rng + ?Sized>(t: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::Config("mini-batch size must be positive".into()));
    }
    if size > t {
        return Err(Error::Config(format!("mini-batch size {size} exceeds {t} constraints")));
    }
    let mut idx = sample(rng, t, size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Forward direction whose basis is chosen on `size` constraints drawn
/// without replacement; the score is the mini-batch estimate.
pub fn forward_minibatch<R: Rng + ?Sized>(
    cs: &ConstraintSet<'_>,
    cache: &MarginCache,
    size: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<Direction> {
    let batch = draw_batch(cs.len(), size, rng)?;
    let acc = gradient_accumulate(cs, cache, Some(&batch));
    let best = forward_exact(&acc, lambda, cs.dim())?;
    Ok(Direction::forward(cs, best, lambda))
}

/// Two-stage restricted search: best pair containing a random feature `i`,
/// then best pair containing that pair's other feature.
pub fn forward_heuristic<R: Rng + ?Sized>(
    cs: &ConstraintSet<'_>,
    cache: &MarginCache,
    size: usize,
    lambda: f64,
    rng: &mut R,
) -> Result<Direction> {
    let dim = cs.dim();
    if dim < 2 {
        return Err(Error::Domain(format!("need at least two features, got {dim}")));
    }
    let batch = draw_batch(cs.len(), size, rng)?;
    let first = rng.gen_range(0..dim);
    let best = heuristic_from(cs, cache, &batch, first, lambda)?;
    Ok(Direction::forward(cs, best, lambda))
}

pub(crate) fn heuristic_from(
    cs: &ConstraintSet<'_>,
    cache: &MarginCache,
    batch: &[usize],
    first: usize,
    lambda: f64,
) -> Result<ScoredBasis> {
    let dim = cs.dim();
    let diag = RowAccumulators::diag_only(cs, cache, batch);
    let row = RowAccumulators::row(cs, cache, batch, first);
    let stage1 = best_in_row(&diag, &row, first, lambda, dim)?;
    let partner = if stage1.basis.i() == first { stage1.basis.j() } else { stage1.basis.i() };
    let row = RowAccumulators::row(cs, cache, batch, partner);
    best_in_row(&diag, &row, partner, lambda, dim)
}

/// `(1/T) sum_t g_t b_t`.
pub(crate) fn inner_with_gradient(cache: &MarginCache, inners: &BasisInners) -> f64 {
    let margins = cache.margins();
    let sum: f64 = inners
        .entries()
        .iter()
        .map(|&(t, b)| smoothed_hinge_deriv(margins[t as usize]) * b)
        .sum();
    sum / margins.len().max(1) as f64
}

fn gamma_max_for(weight: f64) -> f64 {
    if weight >= 1.0 {
        0.0
    } else {
        weight / (1.0 - weight)
    }
}

/// Active atom maximizing `<B, grad f>`, with inner products looked up in `inners`.
pub(crate) fn away_from_cached(
    model: &Model,
    inners: &FxHashMap<BasisId, BasisInners>,
    cache: &MarginCache,
) -> Direction {
    let mut best: Option<(BasisId, f64)> = None;
    for b in model.atoms().keys() {
        let score = inner_with_gradient(cache, &inners[b]);
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((*b, score));
        }
    }
    let (basis, score) = best.expect("model has at least one atom");
    Direction {
        kind: StepKind::Away,
        basis,
        gamma_max: gamma_max_for(model.weight(&basis)),
        inners: inners[&basis].clone(),
        score,
    }
}

/// Away direction: the active atom with the largest `<B, grad f>`, ties to the
/// smallest basis. A single-atom model gets `gamma_max = 0`.
pub fn away_direction(model: &Model, cs: &ConstraintSet<'_>, cache: &MarginCache) -> Direction {
    let inners: FxHashMap<BasisId, BasisInners> = model
        .atoms()
        .keys()
        .map(|b| (*b, cs.basis_inners(*b, model.lambda())))
        .collect();
    away_from_cached(model, &inners, cache)
}

/// Forward unless the away direction is strictly steeper and feasible.
pub fn choose_direction(fwd: Direction, away: Direction, cache: &MarginCache) -> Direction {
    let gi = grad_inner_with_model(cache);
    if away.gamma_max <= 0.0 || fwd.slope(gi) <= away.slope(gi) {
        fwd
    } else {
        away
    }
}

/// Constraints whose loss can change along the segment, as `(margin, slope)`.
fn moving_margins(cache: &MarginCache, dir: &Direction) -> Vec<(f64, f64)> {
    let gmax = dir.gamma_max;
    let mut out = Vec::new();
    let mut entries = dir.inners.entries().iter().peekable();
    for (t, &m) in cache.margins().iter().enumerate() {
        let b = match entries.peek() {
            Some(&&(tt, b)) if tt as usize == t => {
                entries.next();
                b
            }
            _ => 0.0,
        };
        let slope = match dir.kind {
            StepKind::Forward => b - m,
            StepKind::Away => m - b,
        };
        if slope == 0.0 || (m >= 1.0 && m + gmax * slope >= 1.0) {
            continue;
        }
        out.push((m, slope));
    }
    out
}

/// Line-search state along one direction: `phi(gamma) = f(M + gamma D)`.
struct Segment {
    moving: Vec<(f64, f64)>,
    inv_t: f64,
}

impl Segment {
    fn deriv(&self, gamma: f64) -> f64 {
        self.moving.iter().map(|&(m, s)| smoothed_hinge_deriv(m + gamma * s) * s).sum::<f64>()
            * self.inv_t
    }

    fn value(&self, gamma: f64) -> f64 {
        self.moving.iter().map(|&(m, s)| smoothed_hinge(m + gamma * s)).sum::<f64>() * self.inv_t
    }
}

/// Bisection on `phi'` over `[0, gamma_max]`.
///
/// Returns a boundary when `phi'` keeps one sign on the interval, otherwise a
/// point with `|phi'| <= eps` or the midpoint of a bracket narrower than `eps`.
/// Uses at most `ceil(log2(gamma_max / eps)) + 2` derivative evaluations.
pub fn line_search(cache: &MarginCache, dir: &Direction, eps: f64) -> f64 {
    let gmax = dir.gamma_max;
    if gmax <= 0.0 || cache.is_empty() {
        return 0.0;
    }
    let seg = Segment { moving: moving_margins(cache, dir), inv_t: 1.0 / cache.len() as f64 };
    if seg.deriv(0.0) >= 0.0 {
        return 0.0;
    }
    if seg.deriv(gmax) <= 0.0 {
        return gmax;
    }
    let (mut lo, mut hi) = (0.0, gmax);
    let max_iter = (gmax / eps).log2().ceil().max(0.0) as usize;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let d = seg.deriv(mid);
        if d.abs() <= eps {
            return mid;
        }
        if d < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= eps {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    // phi is decreasing on [0, lo]; never return a point worse than lo
    if seg.value(mid) <= seg.value(lo) {
        mid
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(kind: StepKind, gamma_max: f64, inners: &[f64], score: f64) -> Direction {
        Direction {
            kind,
            basis: BasisId::pos(0, 1),
            gamma_max,
            inners: BasisInners::from_dense(inners),
            score,
        }
    }

    #[test]
    fn line_search_closed_form() {
        // phi(gamma) = l(2 gamma): flat zero from 0.5 on, so gamma_max is optimal
        let cache = MarginCache::from_margins(vec![0.0]);
        let g = line_search(&cache, &dir(StepKind::Forward, 1.0, &[2.0], 0.0), 1e-6);
        assert!(g >= 0.5 - 1e-6 && g <= 1.0);
        assert_eq!(smoothed_hinge(2.0 * g), 0.0);
    }

    #[test]
    fn line_search_interior_root() {
        // two constraints pulling in opposite directions
        let cache = MarginCache::from_margins(vec![0.0, 0.5]);
        let d = dir(StepKind::Forward, 1.0, &[1.0, 0.0], 0.0);
        let g = line_search(&cache, &d, 1e-9);
        // 2 phi'(g) = (g - 1) + (-0.5 - 0.5 g)(-0.5) = 1.25 g - 0.75, root at 0.6
        assert!((g - 0.6).abs() < 1e-6, "{g}");
    }

    #[test]
    fn line_search_boundaries() {
        let cache = MarginCache::from_margins(vec![0.5]);
        // moving toward a worse margin: no descent
        assert_eq!(line_search(&cache, &dir(StepKind::Forward, 1.0, &[-1.0], 0.0), 1e-6), 0.0);
        // descent all the way
        let cache = MarginCache::from_margins(vec![-2.0]);
        assert_eq!(line_search(&cache, &dir(StepKind::Forward, 1.0, &[0.5], 0.0), 1e-6), 1.0);
        // impossible away step
        assert_eq!(line_search(&cache, &dir(StepKind::Away, 0.0, &[0.5], 0.0), 1e-6), 0.0);
    }

    #[test]
    fn choose_direction_rules() {
        let cache = MarginCache::from_margins(vec![0.5]);
        let gi = grad_inner_with_model(&cache);
        let fwd = dir(StepKind::Forward, 1.0, &[1.0], gi - 1.0);
        let blocked = dir(StepKind::Away, 0.0, &[1.0], gi + 5.0);
        assert_eq!(choose_direction(fwd.clone(), blocked, &cache).kind, StepKind::Forward);
        let tie = dir(StepKind::Away, 0.5, &[1.0], gi + 1.0);
        assert_eq!(choose_direction(fwd.clone(), tie, &cache).kind, StepKind::Forward);
        let steeper = dir(StepKind::Away, 0.5, &[1.0], gi + 2.0);
        assert_eq!(choose_direction(fwd, steeper, &cache).kind, StepKind::Away);
    }

    #[test]
    fn gamma_max_of_single_atom_is_zero() {
        assert_eq!(gamma_max_for(1.0), 0.0);
        assert_eq!(gamma_max_for(0.25), 0.25 / 0.75);
    }
}
