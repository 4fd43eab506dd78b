//! Rank-one 4-sparse bases, convex-combination models and their square roots.
//!
//! A basis `Pos(i, j)` is `lambda (e_i + e_j)(e_i + e_j)^T` and `Neg(i, j)` is
//! `lambda (e_i - e_j)(e_i - e_j)^T`. A [`Model`] is a convex combination of
//! such bases, hence symmetric PSD with at most four nonzeros per atom.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::sparse_data::{dot_unchecked, SparseVector};

/// Tolerance on the weight sum of an in-memory model.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Tolerance on the weight sum when loading a model file.
pub const FILE_WEIGHT_SUM_TOL: f64 = 1e-6;

const MODEL_HEADER: &str = "hdsl-model 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Pos => 1.0,
            Sign::Neg => -1.0,
        }
    }

    fn letter(self) -> char {
        match self {
            Sign::Pos => 'P',
            Sign::Neg => 'N',
        }
    }
}

/// One element of the basis set: a feature pair with `i < j` and a sign.
///
/// The derived ordering (by `i`, then `j`, then `Pos < Neg`) is the tie-break
/// used everywhere a best basis is selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BasisId {
    i: u32,
    j: u32,
    sign: Sign,
}

impl BasisId {
    /// Canonicalizes the pair so that `i < j`. Diagonal pairs are rejected.
    pub fn new(i: usize, j: usize, sign: Sign) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidBasis(format!("diagonal pair ({i}, {j})")));
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        if j > u32::MAX as usize {
            return Err(Error::InvalidBasis(format!("feature index {j} too large")));
        }
        Ok(Self { i: i as u32, j: j as u32, sign })
    }

    pub fn pos(i: usize, j: usize) -> Self {
        Self::new(i, j, Sign::Pos).expect("valid basis")
    }

    pub fn neg(i: usize, j: usize) -> Self {
        Self::new(i, j, Sign::Neg).expect("valid basis")
    }

    pub fn i(&self) -> usize {
        self.i as usize
    }

    pub fn j(&self) -> usize {
        self.j as usize
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    /// `u^T v` where `u = e_i + s e_j` is the basis direction.
    #[inline]
    pub(crate) fn project(&self, v: &SparseVector) -> f64 {
        v.get(self.i()) + self.sign.value() * v.get(self.j())
    }
}

impl fmt::Display for BasisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}, {})", self.sign.letter(), self.i, self.j)
    }
}

/// `<x d^T, B>` for the basis `b` at scale `lambda`.
///
/// Equals `lambda (x_i d_i + x_j d_j + s (x_i d_j + x_j d_i))`, which factors as
/// `lambda (x_i + s x_j)(d_i + s d_j)`.
pub fn basis_inner(x: &SparseVector, diff: &SparseVector, b: BasisId, lambda: f64) -> f64 {
    lambda * b.project(x) * b.project(diff)
}

/// A convex combination of bases at a common scale `lambda`.
#[derive(Debug, Default)]
pub struct Model {
    lambda: f64,
    dim: usize,
    atoms: BTreeMap<BasisId, f64>,
    rows: OnceLock<FxHashMap<u32, Vec<(u32, f64)>>>,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            lambda: self.lambda,
            dim: self.dim,
            atoms: self.atoms.clone(),
            rows: OnceLock::new(),
        }
    }
}

impl PartialEq for Model {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda && self.dim == other.dim && self.atoms == other.atoms
    }
}

impl Model {
    pub fn new(lambda: f64, dim: usize, atoms: BTreeMap<BasisId, f64>) -> Result<Self> {
        let m = Self { lambda, dim, atoms, rows: OnceLock::new() };
        m.check_invariants()?;
        Ok(m)
    }

    pub fn single(lambda: f64, dim: usize, basis: BasisId) -> Result<Self> {
        Self::new(lambda, dim, BTreeMap::from([(basis, 1.0)]))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn atoms(&self) -> &BTreeMap<BasisId, f64> {
        &self.atoms
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn weight(&self, b: &BasisId) -> f64 {
        self.atoms.get(b).copied().unwrap_or(0.0)
    }

    /// Checks `lambda > 0`, at least one atom, valid features, positive weights summing to 1.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_with_tol(WEIGHT_SUM_TOL)
    }

    fn check_with_tol(&self, tol: f64) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidModel(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.atoms.is_empty() {
            return Err(Error::InvalidModel("model has no atoms".into()));
        }
        let mut sum = 0.0;
        for (b, &w) in &self.atoms {
            if b.j() >= self.dim {
                return Err(Error::InvalidModel(format!("{b} outside dimension {}", self.dim)));
            }
            if !(w > 0.0) {
                return Err(Error::InvalidModel(format!("{b} has non-positive weight {w}")));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidModel(format!("weights sum to {sum}")));
        }
        Ok(())
    }

    /// Same weights, different scale.
    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.dim, self.atoms.clone())
    }

    pub(crate) fn atoms_mut(&mut self) -> &mut BTreeMap<BasisId, f64> {
        self.rows = OnceLock::new();
        &mut self.atoms
    }

    /// Distinct features touched by at least one atom.
    pub fn active_features(&self) -> BTreeSet<usize> {
        self.atoms.keys().flat_map(|b| [b.i(), b.j()]).collect()
    }

    /// `x^T M x2`.
    ///
    /// Iterates atoms when that is cheaper than a pass over the materialized
    /// matrix restricted to the supports of `x` and `x2`.
    pub fn similarity(&self, x: &SparseVector, x2: &SparseVector) -> Result<f64> {
        if x.dim() != self.dim || x2.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: if x.dim() != self.dim { x.dim() } else { x2.dim() },
            });
        }
        if self.atoms.len() < x.nnz().saturating_mul(x2.nnz()) {
            Ok(self.similarity_by_atoms(x, x2))
        } else {
            Ok(self.similarity_by_matrix(x, x2))
        }
    }

    pub(crate) fn similarity_by_atoms(&self, x: &SparseVector, x2: &SparseVector) -> f64 {
        let mut acc = 0.0;
        for (b, &w) in &self.atoms {
            let u = b.project(x);
            if u != 0.0 {
                acc += w * u * b.project(x2);
            }
        }
        self.lambda * acc
    }

    pub(crate) fn similarity_by_matrix(&self, x: &SparseVector, x2: &SparseVector) -> f64 {
        let rows = self.rows.get_or_init(|| {
            let mut rows: FxHashMap<u32, Vec<(u32, f64)>> = FxHashMap::default();
            for (r, c, v) in self.to_sparse_matrix() {
                rows.entry(r as u32).or_default().push((c as u32, v));
            }
            rows
        });
        let mut acc = 0.0;
        for (p, xp) in x.iter() {
            let Some(row) = rows.get(&(p as u32)) else { continue };
            let (mut a, mut b) = (0, 0);
            let idx = x2.indices();
            let vals = x2.values();
            while a < row.len() && b < idx.len() {
                match row[a].0.cmp(&idx[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        acc += xp * row[a].1 * vals[b];
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
        acc
    }

    /// Coordinate list of `M`, sorted by `(row, col)`, duplicates merged and
    /// exact cancellations dropped.
    pub fn to_sparse_matrix(&self) -> Vec<(usize, usize, f64)> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (b, &w) in &self.atoms {
            let v = w * self.lambda;
            let s = b.sign.value();
            *acc.entry((b.i(), b.i())).or_default() += v;
            *acc.entry((b.j(), b.j())).or_default() += v;
            *acc.entry((b.i(), b.j())).or_default() += s * v;
            *acc.entry((b.j(), b.i())).or_default() += s * v;
        }
        acc.into_iter().filter(|(_, v)| *v != 0.0).map(|((r, c), v)| (r, c, v)).collect()
    }

    /// Number of nonzero entries of `M`.
    pub fn nnz(&self) -> usize {
        self.to_sparse_matrix().len()
    }

    /// Sum of absolute values per row of `M`, for rows with any nonzero.
    pub fn row_l1_norms(&self) -> BTreeMap<usize, f64> {
        let mut out = BTreeMap::new();
        for (r, _, v) in self.to_sparse_matrix() {
            *out.entry(r).or_insert(0.0) += v.abs();
        }
        out
    }

    /// Square root `L` with `M = L L^T`, one column per atom.
    pub fn factorize(&self) -> ProjectionMap {
        ProjectionMap {
            dim: self.dim,
            columns: self
                .atoms
                .iter()
                .map(|(b, &w)| ProjectionColumn { basis: *b, coef: (w * self.lambda).sqrt() })
                .collect(),
        }
    }

    pub fn serialize(&self) -> String {
        let mut out = format!("{MODEL_HEADER}\nlambda {} dim {}\n", self.lambda, self.dim);
        for (b, w) in &self.atoms {
            out.push_str(&format!("{} {} {} {}\n", b.sign.letter(), b.i, b.j, w));
        }
        out
    }

    pub fn deserialize(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| Error::ModelFormat(format!("line {}: {msg}", line + 1));
        let (n, header) = lines.next().ok_or_else(|| Error::ModelFormat("empty model file".into()))?;
        if header.trim() != MODEL_HEADER {
            return Err(bad(n, &format!("unsupported header '{}'", header.trim())));
        }
        let (n, meta) = lines.next().ok_or_else(|| Error::ModelFormat("missing lambda line".into()))?;
        let toks: Vec<&str> = meta.split_whitespace().collect();
        let (lambda, dim) = match toks.as_slice() {
            ["lambda", l, "dim", d] => (
                l.parse::<f64>().map_err(|_| bad(n, "invalid lambda"))?,
                d.parse::<usize>().map_err(|_| bad(n, "invalid dim"))?,
            ),
            _ => return Err(bad(n, "expected 'lambda <float> dim <int>'")),
        };
        let mut atoms = BTreeMap::new();
        for (n, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [sign, i, j, w] = toks.as_slice() else {
                return Err(bad(n, "expected '<P|N> <i> <j> <alpha>'"));
            };
            let sign = match *sign {
                "P" => Sign::Pos,
                "N" => Sign::Neg,
                _ => return Err(bad(n, "sign must be P or N")),
            };
            let i: usize = i.parse().map_err(|_| bad(n, "invalid feature index"))?;
            let j: usize = j.parse().map_err(|_| bad(n, "invalid feature index"))?;
            if i >= j {
                return Err(bad(n, "atoms require i < j"));
            }
            let w: f64 = w.parse().map_err(|_| bad(n, "invalid weight"))?;
            let b = BasisId::new(i, j, sign)?;
            if atoms.insert(b, w).is_some() {
                return Err(bad(n, &format!("duplicate atom {b}")));
            }
        }
        let m = Self { lambda, dim, atoms, rows: OnceLock::new() };
        m.check_with_tol(FILE_WEIGHT_SUM_TOL)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.serialize())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::deserialize(&fs::read_to_string(path)?)
    }
}

/// One column of the square root: `coef * (e_i + s e_j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionColumn {
    pub basis: BasisId,
    pub coef: f64,
}

/// Linear map `x -> L^T x` with `L L^T = M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMap {
    dim: usize,
    columns: Vec<ProjectionColumn>,
}

impl ProjectionMap {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn columns(&self) -> &[ProjectionColumn] {
        &self.columns
    }

    /// Output dimension (number of atoms).
    pub fn output_dim(&self) -> usize {
        self.columns.len()
    }

    pub fn project(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: x.dim() });
        }
        Ok(self.columns.iter().map(|c| c.coef * c.basis.project(x)).collect())
    }

    /// `L L^T` as a sorted coordinate list, for checking against the model.
    pub fn reconstruct(&self) -> Vec<(usize, usize, f64)> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for c in &self.columns {
            let entries = [(c.basis.i(), c.coef), (c.basis.j(), c.basis.sign().value() * c.coef)];
            for &(r, a) in &entries {
                for &(k, b) in &entries {
                    *acc.entry((r, k)).or_default() += a * b;
                }
            }
        }
        acc.into_iter().filter(|(_, v)| *v != 0.0).map(|((r, c), v)| (r, c, v)).collect()
    }
}

/// Plain dot product, the identity-matrix baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct DotProduct;

/// Anything that scores a pair of sparse points.
pub trait PairScorer: Sync {
    fn score(&self, x: &SparseVector, x2: &SparseVector) -> f64;
}

impl PairScorer for Model {
    fn score(&self, x: &SparseVector, x2: &SparseVector) -> f64 {
        self.similarity(x, x2).expect("dimension checked by caller")
    }
}

impl PairScorer for DotProduct {
    fn score(&self, x: &SparseVector, x2: &SparseVector) -> f64 {
        dot_unchecked(x, x2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_basis(b: BasisId, lambda: f64, d: usize) -> Vec<Vec<f64>> {
        let mut u = vec![0.0; d];
        u[b.i()] = 1.0;
        u[b.j()] = b.sign().value();
        (0..d).map(|r| (0..d).map(|c| lambda * u[r] * u[c]).collect()).collect()
    }

    fn dense_inner(x: &[f64], diff: &[f64], m: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for r in 0..x.len() {
            for c in 0..diff.len() {
                acc += x[r] * diff[c] * m[r][c];
            }
        }
        acc
    }

    #[test]
    fn basis_is_canonical() {
        assert_eq!(BasisId::pos(3, 1), BasisId::pos(1, 3));
        assert!(BasisId::new(2, 2, Sign::Pos).is_err());
        assert!(BasisId::pos(0, 5) < BasisId::neg(0, 5));
        assert!(BasisId::neg(0, 5) < BasisId::pos(1, 2));
    }

    #[test]
    fn basis_inner_examples() {
        let x = SparseVector::from_dense(&[1.0, 0.0, 0.0]);
        let d = SparseVector::from_dense(&[0.0, 1.0, -1.0]);
        for (b, want) in [(BasisId::pos(0, 1), 2.0), (BasisId::neg(0, 1), -2.0)] {
            let oracle = dense_inner(&x.to_dense(), &d.to_dense(), &dense_basis(b, 2.0, 3));
            assert_eq!(oracle, want);
            assert_eq!(basis_inner(&x, &d, b, 2.0), want);
        }
        assert_eq!(basis_inner(&SparseVector::zeros(3), &d, BasisId::pos(1, 2), 5.0), 0.0);
    }

    #[test]
    fn similarity_examples() {
        let m = Model::single(1.0, 3, BasisId::pos(0, 1)).unwrap();
        let e0 = SparseVector::unit(3, 0);
        let e1 = SparseVector::unit(3, 1);
        assert_eq!(m.similarity(&e0, &e1).unwrap(), 1.0);
        assert_eq!(m.similarity(&e0, &e0).unwrap(), 1.0);
        assert_eq!(m.similarity(&SparseVector::zeros(3), &e1).unwrap(), 0.0);
        assert!(m.similarity(&SparseVector::zeros(4), &e1).is_err());
    }

    #[test]
    fn sparse_matrix_examples() {
        let m = Model::single(3.0, 2, BasisId::pos(0, 1)).unwrap();
        assert_eq!(m.to_sparse_matrix(), vec![(0, 0, 3.0), (0, 1, 3.0), (1, 0, 3.0), (1, 1, 3.0)]);

        let atoms = BTreeMap::from([(BasisId::pos(0, 1), 0.5), (BasisId::neg(0, 1), 0.5)]);
        let m = Model::new(2.0, 2, atoms).unwrap();
        assert_eq!(m.to_sparse_matrix(), vec![(0, 0, 2.0), (1, 1, 2.0)]);

        let m = Model::single(1.0, 6, BasisId::neg(2, 5)).unwrap();
        assert_eq!(
            m.to_sparse_matrix(),
            vec![(2, 2, 1.0), (2, 5, -1.0), (5, 2, -1.0), (5, 5, 1.0)]
        );
    }

    #[test]
    fn factorize_examples() {
        let m = Model::single(4.0, 2, BasisId::pos(0, 1)).unwrap();
        let p = m.factorize();
        assert_eq!(p.columns()[0].coef, 2.0);
        assert_eq!(p.reconstruct(), vec![(0, 0, 4.0), (0, 1, 4.0), (1, 0, 4.0), (1, 1, 4.0)]);
        assert_eq!(p.project(&SparseVector::unit(2, 0)).unwrap(), vec![2.0]);

        let atoms = BTreeMap::from([(BasisId::neg(0, 1), 0.25), (BasisId::pos(2, 3), 0.75)]);
        let m = Model::new(4.0, 4, atoms).unwrap();
        let p = m.factorize();
        assert_eq!(p.columns()[0].coef, 1.0);
        assert_eq!(p.project(&SparseVector::from_dense(&[1.0, 1.0, 0.0, 0.0])).unwrap()[0], 0.0);
        assert_eq!(p.project(&SparseVector::zeros(4)).unwrap(), vec![0.0, 0.0]);
        let rec = p.reconstruct();
        for ((r1, c1, v1), (r2, c2, v2)) in rec.iter().zip(m.to_sparse_matrix()) {
            assert_eq!((*r1, *c1), (r2, c2));
            assert!((v1 - v2).abs() < 1e-10);
        }
    }

    #[test]
    fn one_column_per_atom() {
        let atoms: BTreeMap<_, _> = (0..7).map(|k| (BasisId::pos(k, k + 1), 1.0 / 7.0)).collect();
        let m = Model::new(1.0, 8, atoms).unwrap();
        assert_eq!(m.factorize().output_dim(), 7);
    }

    #[test]
    fn both_similarity_paths_agree() {
        let atoms = BTreeMap::from([
            (BasisId::pos(0, 3), 0.2),
            (BasisId::neg(1, 3), 0.3),
            (BasisId::pos(1, 2), 0.5),
        ]);
        let m = Model::new(1.5, 4, atoms).unwrap();
        let x = SparseVector::from_dense(&[0.3, -1.0, 0.0, 2.0]);
        let y = SparseVector::from_dense(&[1.0, 0.5, 0.7, 0.0]);
        let a = m.similarity_by_atoms(&x, &y);
        let b = m.similarity_by_matrix(&x, &y);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn serialization_round_trip() {
        let m = Model::single(10.0, 5, BasisId::neg(1, 4)).unwrap();
        let text = m.serialize();
        assert_eq!(text.lines().count(), 3);
        assert_eq!(text, "hdsl-model 1\nlambda 10 dim 5\nN 1 4 1\n");
        assert_eq!(Model::deserialize(&text).unwrap(), m);

        let atoms = BTreeMap::from([(BasisId::pos(0, 1), 0.1), (BasisId::neg(2, 3), 0.9)]);
        let m = Model::new(0.3, 4, atoms).unwrap();
        assert_eq!(Model::deserialize(&m.serialize()).unwrap(), m);
    }

    #[test]
    fn deserialize_rejects_bad_files() {
        let half = "hdsl-model 1\nlambda 1 dim 3\nP 0 1 0.5\n";
        assert!(matches!(Model::deserialize(half), Err(Error::InvalidModel(_))));
        let version = "hdsl-model 2\nlambda 1 dim 3\nP 0 1 1\n";
        assert!(matches!(Model::deserialize(version), Err(Error::ModelFormat(_))));
        let dup = "hdsl-model 1\nlambda 1 dim 3\nP 0 1 0.5\nP 0 1 0.5\n";
        assert!(matches!(Model::deserialize(dup), Err(Error::ModelFormat(_))));
        let order = "hdsl-model 1\nlambda 1 dim 3\nP 1 0 1\n";
        assert!(Model::deserialize(order).is_err());
        let range = "hdsl-model 1\nlambda 1 dim 3\nP 0 3 1\n";
        assert!(Model::deserialize(range).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(Model::new(1.0, 3, BTreeMap::new()).is_err());
        assert!(Model::single(0.0, 3, BasisId::pos(0, 1)).is_err());
        let neg_w = BTreeMap::from([(BasisId::pos(0, 1), 1.5), (BasisId::pos(0, 2), -0.5)]);
        assert!(Model::new(1.0, 3, neg_w).is_err());
    }
}
