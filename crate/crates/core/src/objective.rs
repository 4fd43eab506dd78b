//! Smoothed hinge objective over triplet constraints and its margin bookkeeping.
//!
//! Each triplet `t = (a, b, c)` defines `A_t = x_a (x_b - x_c)^T` and the margin
//! `m_t = <A_t, M>`. The objective is the mean smoothed hinge of the margins;
//! its gradient is `(1/T) sum_t g_t A_t` with `g_t = smoothed_hinge_deriv(m_t)`.

use crate::error::{Error, Result};
use crate::model::{basis_inner, BasisId, Model};
use crate::sparse_data::{Dataset, SparseVector, TripletConstraint};

/// `0` for `m >= 1`, `0.5 - m` for `m <= 0`, `0.5 (1 - m)^2` in between.
#[inline]
pub fn smoothed_hinge(m: f64) -> f64 {
    if m >= 1.0 {
        0.0
    } else if m <= 0.0 {
        0.5 - m
    } else {
        0.5 * (1.0 - m) * (1.0 - m)
    }
}

/// Derivative of [`smoothed_hinge`]; the gradient coefficient of a constraint.
#[inline]
pub fn smoothed_hinge_deriv(m: f64) -> f64 {
    if m >= 1.0 {
        0.0
    } else if m <= 0.0 {
        -1.0
    } else {
        m - 1.0
    }
}

/// Postings list for one feature: `(constraint, value)` sorted by constraint.
#[derive(Debug, Clone, Default)]
struct Postings {
    offsets: Vec<usize>,
    entries: Vec<(u32, f64)>,
}

impl Postings {
    fn build(dim: usize, vectors: impl Iterator<Item = (usize, impl Iterator<Item = (usize, f64)>)>) -> Self {
        let mut triples: Vec<(u32, u32, f64)> = Vec::new();
        for (t, v) in vectors {
            triples.extend(v.map(|(f, val)| (f as u32, t as u32, val)));
        }
        triples.sort_unstable_by_key(|&(f, t, _)| (f, t));
        let mut offsets = vec![0usize; dim + 1];
        for &(f, _, _) in &triples {
            offsets[f as usize + 1] += 1;
        }
        for f in 0..dim {
            offsets[f + 1] += offsets[f];
        }
        let entries = triples.into_iter().map(|(_, t, v)| (t, v)).collect();
        Self { offsets, entries }
    }

    fn get(&self, f: usize) -> &[(u32, f64)] {
        if f + 1 >= self.offsets.len() {
            return &[];
        }
        &self.entries[self.offsets[f]..self.offsets[f + 1]]
    }

    /// Merged list of `a_t + s * b_t` over the union of both postings.
    fn combine(&self, i: usize, j: usize, s: f64) -> Vec<(u32, f64)> {
        let (a, b) = (self.get(i), self.get(j));
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut p, mut q) = (0, 0);
        while p < a.len() || q < b.len() {
            let ta = a.get(p).map_or(u32::MAX, |e| e.0);
            let tb = b.get(q).map_or(u32::MAX, |e| e.0);
            if ta < tb {
                out.push(a[p]);
                p += 1;
            } else if tb < ta {
                out.push((tb, s * b[q].1));
                q += 1;
            } else {
                out.push((ta, a[p].1 + s * b[q].1));
                p += 1;
                q += 1;
            }
        }
        out
    }
}

/// Per-constraint inner products `<A_t, B>` for one basis, stored sparsely.
///
/// Most constraints do not touch both features of a basis, so only the
/// nonzero values are kept; `len` is the number of constraints `T`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BasisInners {
    len: usize,
    entries: Vec<(u32, f64)>,
}

impl BasisInners {
    pub fn new(len: usize, entries: Vec<(u32, f64)>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidConstraint("inner products must be sorted by constraint".into()));
        }
        if let Some(&(t, _)) = entries.last() {
            if t as usize >= len {
                return Err(Error::LengthMismatch { expected: len, got: t as usize + 1 });
            }
        }
        Ok(Self { len, entries })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        Self {
            len: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(t, v)| (t as u32, *v))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(t, v) in &self.entries {
            out[t as usize] = v;
        }
        out
    }
}

/// Triplets over a dataset, with precomputed differences `x_b - x_c` and
/// feature-to-constraint postings for anchors and differences.
#[derive(Debug, Clone)]
pub struct ConstraintSet<'a> {
    data: &'a Dataset,
    triplets: Vec<TripletConstraint>,
    diffs: Vec<SparseVector>,
    anchor_postings: Postings,
    diff_postings: Postings,
}

impl<'a> ConstraintSet<'a> {
    pub fn new(data: &'a Dataset, triplets: Vec<TripletConstraint>) -> Result<Self> {
        for t in &triplets {
            t.validate(data.len())?;
        }
        if triplets.len() > u32::MAX as usize {
            return Err(Error::InvalidConstraint("too many constraints".into()));
        }
        let diffs = triplets
            .iter()
            .map(|t| data.point(t.b).sub(data.point(t.c)))
            .collect::<Result<Vec<_>>>()?;
        let anchor_postings = Postings::build(
            data.dim(),
            triplets.iter().enumerate().map(|(k, t)| (k, data.point(t.a).iter())),
        );
        let diff_postings =
            Postings::build(data.dim(), diffs.iter().enumerate().map(|(k, d)| (k, d.iter())));
        Ok(Self { data, triplets, diffs, anchor_postings, diff_postings })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    pub fn triplets(&self) -> &[TripletConstraint] {
        &self.triplets
    }

    /// Anchor `x_t` of constraint `t`.
    pub fn anchor(&self, t: usize) -> &SparseVector {
        self.data.point(self.triplets[t].a)
    }

    /// Difference `y_t - z_t` of constraint `t`.
    pub fn diff(&self, t: usize) -> &SparseVector {
        &self.diffs[t]
    }

    /// `<A_t, B>` for every constraint, via the postings of `b`'s two features.
    pub fn basis_inners(&self, b: BasisId, lambda: f64) -> BasisInners {
        let s = b.sign().value();
        let xs = self.anchor_postings.combine(b.i(), b.j(), s);
        let ds = self.diff_postings.combine(b.i(), b.j(), s);
        let mut entries = Vec::with_capacity(xs.len().min(ds.len()));
        let (mut p, mut q) = (0, 0);
        while p < xs.len() && q < ds.len() {
            match xs[p].0.cmp(&ds[q].0) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    let v = lambda * xs[p].1 * ds[q].1;
                    if v != 0.0 {
                        entries.push((xs[p].0, v));
                    }
                    p += 1;
                    q += 1;
                }
            }
        }
        BasisInners { len: self.len(), entries }
    }

    /// `<A_t, M>` recomputed directly from the atoms, independent of any cache.
    pub fn margin_direct(&self, t: usize, model: &Model) -> f64 {
        let (x, d) = (self.anchor(t), self.diff(t));
        model.atoms().iter().map(|(b, w)| w * basis_inner(x, d, *b, model.lambda())).sum()
    }

    /// `||A_t||_F^2 = ||x_t||^2 ||y_t - z_t||^2`.
    pub fn frobenius_sq(&self, t: usize) -> f64 {
        self.anchor(t).norm_sq() * self.diff(t).norm_sq()
    }
}

/// Kind of Frank-Wolfe move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum StepKind {
    /// Toward a basis: `M + gamma (B - M)`.
    #[serde(rename = "F")]
    Forward,
    /// Away from an active atom: `M + gamma (M - B)`.
    #[serde(rename = "A")]
    Away,
}

/// Margins `m_t = <A_t, M>` of the current iterate, one per constraint.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarginCache {
    margins: Vec<f64>,
}

impl MarginCache {
    pub fn from_margins(margins: Vec<f64>) -> Self {
        Self { margins }
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    /// Applies a step of size `gamma` along a direction whose basis has inner
    /// products `inners`, in O(T).
    pub fn update(&mut self, kind: StepKind, gamma: f64, inners: &BasisInners) -> Result<()> {
        if inners.len() != self.margins.len() {
            return Err(Error::LengthMismatch { expected: self.margins.len(), got: inners.len() });
        }
        if gamma == 0.0 {
            return Ok(());
        }
        let (scale, coef) = match kind {
            StepKind::Forward => (1.0 - gamma, gamma),
            StepKind::Away => (1.0 + gamma, -gamma),
        };
        for m in &mut self.margins {
            *m *= scale;
        }
        for &(t, b) in inners.entries() {
            self.margins[t as usize] += coef * b;
        }
        Ok(())
    }

    /// Drops an atom of residual weight `w` and renormalizes: `m <- (m - w b) / (1 - w)`.
    pub(crate) fn remove_residual(&mut self, w: f64, inners: &BasisInners) {
        for &(t, b) in inners.entries() {
            self.margins[t as usize] -= w * b;
        }
        let scale = 1.0 / (1.0 - w);
        for m in &mut self.margins {
            *m *= scale;
        }
    }
}

/// Margins of `model` computed from scratch through the postings.
pub fn init_cache(cs: &ConstraintSet<'_>, model: &Model) -> MarginCache {
    let mut margins = vec![0.0; cs.len()];
    for (b, &w) in model.atoms() {
        for &(t, v) in cs.basis_inners(*b, model.lambda()).entries() {
            margins[t as usize] += w * v;
        }
    }
    MarginCache { margins }
}

/// `(1/T) sum_t smoothed_hinge(m_t)`.
pub fn objective(cache: &MarginCache) -> Result<f64> {
    if cache.is_empty() {
        return Err(Error::EmptyConstraints);
    }
    let sum: f64 = cache.margins.iter().map(|&m| smoothed_hinge(m)).sum();
    Ok(sum / cache.len() as f64)
}

/// `<M, grad f(M)> = (1/T) sum_t g_t m_t`, by linearity of each gradient term in `A_t`.
pub fn grad_inner_with_model(cache: &MarginCache) -> f64 {
    if cache.is_empty() {
        return 0.0;
    }
    let sum: f64 = cache
        .margins
        .iter()
        .filter(|&&m| m < 1.0)
        .map(|&m| smoothed_hinge_deriv(m) * m)
        .sum();
    sum / cache.len() as f64
}
