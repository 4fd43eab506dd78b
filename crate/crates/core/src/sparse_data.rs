//! Sparse points, labeled datasets, triplets and LIBSVM text I/O.
//!
//! Feature indices are 0-based in memory and 1-based on disk.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A sparse vector with strictly increasing indices and no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    indices: Vec<u32>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseVector {
    /// Builds a vector from `(index, value)` pairs. Explicit zeros are dropped;
    /// indices must be strictly increasing and below `dim`.
    pub fn new(dim: usize, entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<usize> = None;
        for (idx, val) in entries {
            if idx >= dim {
                return Err(Error::InvalidVector(format!(
                    "index {idx} out of range for dimension {dim}"
                )));
            }
            if let Some(prev) = last {
                if idx <= prev {
                    return Err(Error::InvalidVector(format!(
                        "non-increasing index {idx} after {prev}"
                    )));
                }
            }
            if !val.is_finite() {
                return Err(Error::InvalidVector(format!("non-finite value at index {idx}")));
            }
            last = Some(idx);
            if val != 0.0 {
                indices.push(idx as u32);
                values.push(val);
            }
        }
        Ok(Self { indices, values, dim })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { indices: Vec::new(), values: Vec::new(), dim }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let dim = values.len();
        let (indices, values) = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        Self { indices, values, dim }
    }

    /// Unit vector `e_i`.
    pub fn unit(dim: usize, i: usize) -> Self {
        assert!(i < dim, "unit index {i} out of range for dimension {dim}");
        Self { indices: vec![i as u32], values: vec![1.0], dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// Value at `i` by binary search, zero when absent.
    pub fn get(&self, i: usize) -> f64 {
        match self.indices.binary_search(&(i as u32)) {
            Ok(pos) => self.values[pos],
            Err(_) => 0.0,
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }

    /// Grows the ambient dimension; shrinking below the largest index is an error.
    pub fn with_dim(mut self, dim: usize) -> Result<Self> {
        if let Some(&last) = self.indices.last() {
            if last as usize >= dim {
                return Err(Error::InvalidVector(format!(
                    "index {last} does not fit dimension {dim}"
                )));
            }
        }
        self.dim = dim;
        Ok(self)
    }

    pub fn dot(&self, other: &SparseVector) -> Result<f64> {
        dot(self, other)
    }

    /// `self - other`, dropping entries that cancel exactly.
    pub fn sub(&self, other: &SparseVector) -> Result<SparseVector> {
        check_dims(self.dim, other.dim)?;
        let (mut p, mut q) = (0, 0);
        let mut indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        let mut push = |i: u32, v: f64| {
            if v != 0.0 {
                indices.push(i);
                values.push(v);
            }
        };
        while p < self.indices.len() || q < other.indices.len() {
            let a = self.indices.get(p).copied().unwrap_or(u32::MAX);
            let b = other.indices.get(q).copied().unwrap_or(u32::MAX);
            match a.cmp(&b) {
                Ordering::Less => {
                    push(a, self.values[p]);
                    p += 1;
                }
                Ordering::Greater => {
                    push(b, -other.values[q]);
                    q += 1;
                }
                Ordering::Equal => {
                    push(a, self.values[p] - other.values[q]);
                    p += 1;
                    q += 1;
                }
            }
        }
        Ok(SparseVector { indices, values, dim: self.dim })
    }

    fn map_values(&self, f: impl Fn(usize, f64) -> f64) -> SparseVector {
        SparseVector::new(self.dim, self.iter().map(|(i, v)| (i, f(i, v))))
            .expect("mapping preserves index order")
    }
}

fn check_dims(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Merge-join inner product, O(nnz(u) + nnz(v)).
pub fn dot(u: &SparseVector, v: &SparseVector) -> Result<f64> {
    check_dims(u.dim, v.dim)?;
    Ok(dot_unchecked(u, v))
}

pub(crate) fn dot_unchecked(u: &SparseVector, v: &SparseVector) -> f64 {
    let (mut p, mut q) = (0, 0);
    let mut acc = 0.0;
    while p < u.indices.len() && q < v.indices.len() {
        match u.indices[p].cmp(&v.indices[q]) {
            Ordering::Less => p += 1,
            Ordering::Greater => q += 1,
            Ordering::Equal => {
                acc += u.values[p] * v.values[q];
                p += 1;
                q += 1;
            }
        }
    }
    acc
}

/// Sparse points sharing one ambient dimension, with optional integer labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    points: Vec<SparseVector>,
    labels: Option<Vec<i64>>,
    dim: usize,
}

impl Dataset {
    pub fn new(points: Vec<SparseVector>, labels: Option<Vec<i64>>, dim: usize) -> Result<Self> {
        if let Some(bad) = points.iter().position(|p| p.dim != dim) {
            return Err(Error::InvalidDataset(format!(
                "point {bad} has dimension {} but dataset has {dim}",
                points[bad].dim
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != points.len() {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {} points",
                    labels.len(),
                    points.len()
                )));
            }
        }
        Ok(Self { points, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[SparseVector] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SparseVector {
        &self.points[i]
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<i64> {
        self.labels.as_ref().map(|l| l[i])
    }

    /// Re-declares the ambient dimension (e.g. to align a test split with training).
    pub fn with_dim(self, dim: usize) -> Result<Self> {
        let points = self
            .points
            .into_iter()
            .map(|p| p.with_dim(dim))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points, labels: self.labels, dim })
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            points: indices.iter().map(|&i| self.points[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            dim: self.dim,
        }
    }

    /// Average number of stored entries per point.
    pub fn mean_nnz(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().map(SparseVector::nnz).sum::<usize>() as f64 / self.points.len() as f64
    }
}

/// One triplet: `a` should be more similar to `b` than to `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripletConstraint {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl TripletConstraint {
    pub fn new(a: usize, b: usize, c: usize) -> Self {
        Self { a, b, c }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.a >= n || self.b >= n || self.c >= n {
            return Err(Error::InvalidConstraint(format!(
                "triplet ({}, {}, {}) out of range for {n} points",
                self.a, self.b, self.c
            )));
        }
        if self.b == self.c {
            return Err(Error::InvalidConstraint(format!(
                "triplet ({}, {}, {}) has identical similar and dissimilar points",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }
}

fn parse_label(tok: &str, line: usize) -> Result<i64> {
    if let Ok(v) = tok.trim_start_matches('+').parse::<i64>() {
        return Ok(v);
    }
    match tok.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Ok(v as i64),
        _ => Err(Error::Parse { line, msg: format!("invalid label '{tok}'") }),
    }
}

/// Reads LIBSVM text (`<label> <idx>:<val> ...`, 1-based indices).
///
/// Blank lines and `#` comments are skipped. The dimension is the largest
/// index seen unless `dim` is given, in which case it must cover every index.
pub fn parse_libsvm<R: BufRead>(reader: R, dim: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        let mut tokens = content.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        labels.push(parse_label(label_tok, lineno)?);
        let mut entries = Vec::new();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno,
                msg: format!("expected <index>:<value>, found '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse { line: lineno, msg: "indices are 1-based".into() });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("invalid value '{val}'"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse { line: lineno, msg: format!("non-finite value '{val}'") });
            }
            if let Some(p) = prev {
                if idx <= p {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-increasing index {idx} after {p}"),
                    });
                }
            }
            prev = Some(idx);
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
    }
    let dim = match dim {
        Some(d) if d < max_index => {
            return Err(Error::InvalidDataset(format!(
                "explicit dimension {d} is smaller than largest index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let points = rows
        .into_iter()
        .map(|r| SparseVector::new(dim, r))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(points, Some(labels), dim)
}

pub fn read_libsvm_file(path: impl AsRef<Path>, dim: Option<usize>) -> Result<Dataset> {
    let file = File::open(path)?;
    parse_libsvm(BufReader::new(file), dim)
}

/// Writes LIBSVM text. Unlabeled datasets get label `0` on every line.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut out: W) -> Result<()> {
    for (i, p) in ds.points.iter().enumerate() {
        write!(out, "{}", ds.label(i).unwrap_or(0))?;
        for (idx, v) in p.iter() {
            write!(out, " {}:{}", idx + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn write_libsvm_file(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_libsvm(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Per-feature max-abs scaling fitted on one dataset and applicable to others.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    max_abs: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(ds: &Dataset) -> Self {
        let mut max_abs = vec![0.0f64; ds.dim];
        for p in &ds.points {
            for (i, v) in p.iter() {
                max_abs[i] = max_abs[i].max(v.abs());
            }
        }
        Self { max_abs }
    }

    pub fn max_abs(&self) -> &[f64] {
        &self.max_abs
    }

    /// Divides each feature by its fitted max; features unseen at fit time are left as is.
    pub fn apply(&self, ds: &Dataset) -> Dataset {
        let scale = |i: usize, v: f64| match self.max_abs.get(i) {
            Some(&m) if m > 0.0 => v / m,
            _ => v,
        };
        Dataset {
            points: ds.points.iter().map(|p| p.map_values(scale)).collect(),
            labels: ds.labels.clone(),
            dim: ds.dim,
        }
    }
}

/// Scales every feature into `[-1, 1]` by its own max absolute value.
pub fn scale_to_unit_range(ds: &Dataset) -> Dataset {
    FeatureScaler::fit(ds).apply(ds)
}
