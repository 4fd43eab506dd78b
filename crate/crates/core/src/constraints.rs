//! Triplet constraints from labels, from a ground-truth similarity, or from signed links.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, PairScorer};
use crate::sparse_data::{Dataset, TripletConstraint};

/// Generated triplets and the number of anchors (or links) that had to be skipped.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Generated {
    pub triplets: Vec<TripletConstraint>,
    pub skipped: usize,
}

/// Descending by score, ties to the lower index.
fn by_score_desc(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

fn labels_of(ds: &Dataset) -> Result<&[i64]> {
    ds.labels().ok_or_else(|| Error::InvalidDataset("labels required".into()))
}

/// For each point: its `n_targets` most similar same-label points and
/// `n_impostors` most similar other-label points, one triplet per
/// (target, impostor) pair. Points whose class or complement is too small are skipped.
pub fn neighbors_triplets<S: PairScorer>(
    ds: &Dataset,
    n_targets: usize,
    n_impostors: usize,
    sim: &S,
) -> Result<Generated> {
    let labels = labels_of(ds)?;
    if n_targets == 0 || n_impostors == 0 {
        return Err(Error::Config("target and impostor counts must be positive".into()));
    }
    let per_anchor: Vec<Option<Vec<TripletConstraint>>> = (0..ds.len())
        .into_par_iter()
        .map(|a| {
            let x = ds.point(a);
            let mut same = Vec::new();
            let mut other = Vec::new();
            for (j, p) in ds.points().iter().enumerate() {
                if j == a {
                    continue;
                }
                let s = sim.score(x, p);
                if labels[j] == labels[a] {
                    same.push((j, s));
                } else {
                    other.push((j, s));
                }
            }
            if same.len() < n_targets || other.len() < n_impostors {
                return None;
            }
            same.sort_by(by_score_desc);
            other.sort_by(by_score_desc);
            let mut out = Vec::with_capacity(n_targets * n_impostors);
            for &(b, _) in &same[..n_targets] {
                for &(c, _) in &other[..n_impostors] {
                    out.push(TripletConstraint::new(a, b, c));
                }
            }
            Some(out)
        })
        .collect();
    let mut gen = Generated::default();
    for t in per_anchor {
        match t {
            Some(t) => gen.triplets.extend(t),
            None => gen.skipped += 1,
        }
    }
    if gen.skipped > 0 {
        log::warn!("{} points skipped: not enough neighbors in or out of their class", gen.skipped);
    }
    Ok(gen)
}

/// `per_instance` triplets per point with a random same-label `b` and a
/// random other-label `c`.
pub fn random_label_triplets<R: Rng + ?Sized>(
    ds: &Dataset,
    per_instance: usize,
    rng: &mut R,
) -> Result<Generated> {
    let labels = labels_of(ds)?;
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    if classes.len() < 2 {
        return Err(Error::InvalidDataset("need at least two classes".into()));
    }
    let mut gen = Generated::default();
    for a in 0..ds.len() {
        let same = &classes[&labels[a]];
        if same.len() < 2 {
            gen.skipped += 1;
            continue;
        }
        let n_other = ds.len() - same.len();
        for _ in 0..per_instance {
            let b = loop {
                let b = same[rng.gen_range(0..same.len())];
                if b != a {
                    break b;
                }
            };
            // the r-th point outside a's class
            let mut r = rng.gen_range(0..n_other);
            let mut c = 0;
            for (&l, members) in &classes {
                if l == labels[a] {
                    continue;
                }
                if r < members.len() {
                    c = members[r];
                    break;
                }
                r -= members.len();
            }
            gen.triplets.push(TripletConstraint::new(a, b, c));
        }
    }
    Ok(gen)
}

/// Size of the top (and bottom) set for a fraction `alpha` of `n - 1` others.
pub fn fraction_set_size(alpha: f64, n: usize) -> usize {
    (alpha * (n.saturating_sub(1)) as f64).ceil() as usize
}

/// Indices of the `size` most and `size` least similar points to `a`, given
/// the similarities `sims` of `a` to every point.
pub(crate) fn top_bottom(a: usize, sims: &[f64], size: usize) -> (Vec<usize>, Vec<usize>) {
    let mut others: Vec<(usize, f64)> =
        sims.iter().enumerate().filter(|&(j, _)| j != a).map(|(j, &s)| (j, s)).collect();
    let n = others.len();
    others.select_nth_unstable_by(size - 1, by_score_desc);
    let mut top: Vec<usize> = others[..size].iter().map(|p| p.0).collect();
    let rest = &mut others[size..];
    rest.select_nth_unstable_by(n - 2 * size, by_score_desc);
    let mut bottom: Vec<usize> = rest[n - 2 * size..].iter().map(|p| p.0).collect();
    top.sort_unstable();
    bottom.sort_unstable();
    (top, bottom)
}

/// Dense projections of every point, so that `x^T M x' = p(x) . p(x')`.
pub(crate) fn projections(ds: &Dataset, truth: &Model) -> Result<Vec<Vec<f64>>> {
    if truth.dim() != ds.dim() {
        return Err(Error::DimensionMismatch { left: truth.dim(), right: ds.dim() });
    }
    let map = truth.factorize();
    ds.points().par_iter().map(|p| map.project(p)).collect()
}

pub(crate) fn dense_dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `count` triplets with a uniform anchor, `b` from its top-`alpha` set and
/// `c` from its bottom-`alpha` set under the truth similarity.
pub fn truth_triplets<R: Rng + ?Sized>(
    ds: &Dataset,
    truth: &Model,
    alpha: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<TripletConstraint>> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Config(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    if count == 0 {
        return Err(Error::Config("triplet count must be positive".into()));
    }
    let n = ds.len();
    let size = fraction_set_size(alpha, n);
    if n < 3 || 2 * size > n - 1 {
        return Err(Error::InvalidDataset(format!("{n} points are too few for alpha {alpha}")));
    }
    let anchors: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n)).collect();
    let mut distinct = anchors.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let proj = projections(ds, truth)?;
    let sets: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = distinct
        .par_iter()
        .map(|&a| {
            let sims: Vec<f64> = proj.iter().map(|p| dense_dot(&proj[a], p)).collect();
            (a, top_bottom(a, &sims, size))
        })
        .collect();
    Ok(anchors
        .into_iter()
        .map(|a| {
            let (top, bottom) = &sets[&a];
            let b = top[rng.gen_range(0..top.len())];
            let c = bottom[rng.gen_range(0..bottom.len())];
            TripletConstraint::new(a, b, c)
        })
        .collect())
}

/// A signed observation: `y = 1` for similar, `-1` for dissimilar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Link {
    pub a: usize,
    pub b: usize,
    pub y: i8,
}

impl Link {
    pub fn new(a: usize, b: usize, y: i8) -> Self {
        Self { a, b, y }
    }
}

/// `per_link` triplets per link. A positive link `(a, b)` gives `(a, b, z)`
/// with `z` a negatively linked neighbor of `a`; a negative link gives
/// `(a, z, b)` with `z` a positively linked neighbor. When `a` has no usable
/// neighbor the roles of `a` and `b` are swapped; failing that the draw is skipped.
pub fn link_triplets<R: Rng + ?Sized>(
    n: usize,
    links: &[Link],
    per_link: usize,
    rng: &mut R,
) -> Result<Generated> {
    let mut pos: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut neg: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in links {
        if l.a >= n || l.b >= n || l.a == l.b {
            return Err(Error::InvalidConstraint(format!("link ({}, {}) invalid for {n} points", l.a, l.b)));
        }
        let lists = match l.y {
            1 => &mut pos,
            -1 => &mut neg,
            y => return Err(Error::InvalidConstraint(format!("link label must be 1 or -1, got {y}"))),
        };
        lists[l.a].push(l.b);
        lists[l.b].push(l.a);
    }
    let mut gen = Generated::default();
    for l in links {
        let pool = if l.y == 1 { &neg } else { &pos };
        let options: Vec<(usize, usize, Vec<usize>)> = [(l.a, l.b), (l.b, l.a)]
            .into_iter()
            .map(|(u, v)| (u, v, pool[u].iter().copied().filter(|&z| z != v).collect::<Vec<_>>()))
            .filter(|(_, _, c)| !c.is_empty())
            .collect();
        let Some((u, v, cands)) = options.into_iter().next() else {
            gen.skipped += per_link;
            continue;
        };
        for _ in 0..per_link {
            let z = *cands.choose(rng).expect("non-empty");
            gen.triplets.push(if l.y == 1 {
                TripletConstraint::new(u, v, z)
            } else {
                TripletConstraint::new(u, z, v)
            });
        }
    }
    if gen.skipped > 0 {
        log::warn!("{} link draws skipped: no usable neighbor", gen.skipped);
    }
    Ok(gen)
}

/// Reads `a b c` lines (0-based); blank lines and `#` comments are ignored.
pub fn read_triplets<R: BufRead>(reader: R) -> Result<Vec<TripletConstraint>> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        let parsed: std::result::Result<Vec<usize>, _> = fields.iter().map(|f| f.parse()).collect();
        match parsed {
            Ok(v) if v.len() == 3 => out.push(TripletConstraint::new(v[0], v[1], v[2])),
            _ => {
                return Err(Error::Parse { line: no + 1, msg: format!("expected `a b c`, got {body:?}") })
            }
        }
    }
    Ok(out)
}

pub fn read_triplets_file(path: impl AsRef<Path>) -> Result<Vec<TripletConstraint>> {
    let f = std::fs::File::open(path)?;
    read_triplets(std::io::BufReader::new(f))
}

pub fn write_triplets<W: Write>(triplets: &[TripletConstraint], mut out: W) -> Result<()> {
    for t in triplets {
        writeln!(out, "{} {} {}", t.a, t.b, t.c)?;
    }
    Ok(())
}

pub fn write_triplets_file(triplets: &[TripletConstraint], path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_triplets(triplets, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads `a b y` lines.
pub fn read_links<R: BufRead>(reader: R) -> Result<Vec<Link>> {
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let f: Vec<&str> = body.split_whitespace().collect();
        let bad = || Error::Parse { line: no + 1, msg: format!("expected `a b y`, got {body:?}") };
        if f.len() != 3 {
            return Err(bad());
        }
        let a = f[0].parse().map_err(|_| bad())?;
        let b = f[1].parse().map_err(|_| bad())?;
        let y: i8 = f[2].trim_start_matches('+').parse().map_err(|_| bad())?;
        if y != 1 && y != -1 {
            return Err(bad());
        }
        out.push(Link::new(a, b, y));
    }
    Ok(out)
}

pub fn read_links_file(path: impl AsRef<Path>) -> Result<Vec<Link>> {
    let f = std::fs::File::open(path)?;
    read_links(std::io::BufReader::new(f))
}

pub fn write_links<W: Write>(links: &[Link], mut out: W) -> Result<()> {
    for l in links {
        writeln!(out, "{} {} {}", l.a, l.b, l.y)?;
    }
    Ok(())
}
