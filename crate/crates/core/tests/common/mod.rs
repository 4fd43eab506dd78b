#![allow(dead_code)]

use hdsl::{BasisId, Dataset, Model, Sign, SparseVector, TripletConstraint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize, density: f64) -> SparseVector {
    let mut entries = Vec::new();
    for i in 0..dim {
        if rng.gen_bool(density) {
            entries.push((i, rng.gen_range(-1.0..1.0)));
        }
    }
    SparseVector::new(dim, entries).unwrap()
}

pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, dim: usize, density: f64) -> Dataset {
    let pts = (0..n).map(|_| random_vector(rng, dim, density)).collect();
    Dataset::new(pts, None, dim).unwrap()
}

pub fn random_triplets<R: Rng>(rng: &mut R, n: usize, t: usize) -> Vec<TripletConstraint> {
    (0..t)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let mut c = rng.gen_range(0..n);
            while c == b {
                c = rng.gen_range(0..n);
            }
            TripletConstraint::new(a, b, c)
        })
        .collect()
}

pub fn random_basis<R: Rng>(rng: &mut R, dim: usize) -> BasisId {
    let i = rng.gen_range(0..dim);
    let mut j = rng.gen_range(0..dim);
    while j == i {
        j = rng.gen_range(0..dim);
    }
    let sign = if rng.gen_bool(0.5) { Sign::Pos } else { Sign::Neg };
    BasisId::new(i, j, sign).unwrap()
}

pub fn random_model<R: Rng>(rng: &mut R, dim: usize, atoms: usize, lambda: f64) -> Model {
    let mut map = std::collections::BTreeMap::new();
    while map.len() < atoms {
        map.insert(random_basis(rng, dim), rng.gen_range(0.1..1.0));
    }
    let total: f64 = map.values().sum();
    map.values_mut().for_each(|w| *w /= total);
    Model::new(lambda, dim, map).unwrap()
}

/// Dense `d x d` matrix of a model.
pub fn dense_matrix(m: &Model) -> Vec<Vec<f64>> {
    let d = m.dim();
    let mut out = vec![vec![0.0; d]; d];
    for (b, &w) in m.atoms() {
        let s = b.sign().value();
        let mut u = vec![0.0; d];
        u[b.i()] = 1.0;
        u[b.j()] = s;
        for r in 0..d {
            for c in 0..d {
                out[r][c] += m.lambda() * w * u[r] * u[c];
            }
        }
    }
    out
}

pub fn bilinear(mat: &[Vec<f64>], x: &[f64], y: &[f64]) -> f64 {
    let mut s = 0.0;
    for (r, row) in mat.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            s += x[r] * v * y[c];
        }
    }
    s
}

/// Every basis of a `dim`-feature domain in `(i, j, sign)` order.
pub fn all_bases(dim: usize) -> Vec<BasisId> {
    let mut out = Vec::new();
    for i in 0..dim {
        for j in i + 1..dim {
            out.push(BasisId::pos(i, j));
            out.push(BasisId::neg(i, j));
        }
    }
    out
}

/// `<B, G>` for a dense matrix `G`.
pub fn dense_score(g: &[Vec<f64>], b: BasisId, lambda: f64) -> f64 {
    let s = b.sign().value();
    let (i, j) = (b.i(), b.j());
    lambda * (g[i][i] + g[j][j] + s * (g[i][j] + g[j][i]))
}

/// Dense `(1/T) sum_t g(m_t) x_t d_t^T` with margins `x_t^T M d_t` from `mat`.
pub fn dense_gradient(ds: &Dataset, triplets: &[TripletConstraint], mat: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = ds.dim();
    let mut g = vec![vec![0.0; d]; d];
    for t in triplets {
        let x = ds.point(t.a).to_dense();
        let diff: Vec<f64> = ds.point(t.b).to_dense().iter().zip(ds.point(t.c).to_dense()).map(|(u, v)| u - v).collect();
        let m = bilinear(mat, &x, &diff);
        let coef = hdsl::objective::smoothed_hinge_deriv(m) / triplets.len() as f64;
        for r in 0..d {
            for c in 0..d {
                g[r][c] += coef * x[r] * diff[c];
            }
        }
    }
    g
}

/// Dense objective `(1/T) sum_t l(x_t^T M d_t)`.
pub fn dense_objective(ds: &Dataset, triplets: &[TripletConstraint], mat: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for t in triplets {
        let x = ds.point(t.a).to_dense();
        let diff: Vec<f64> = ds.point(t.b).to_dense().iter().zip(ds.point(t.c).to_dense()).map(|(u, v)| u - v).collect();
        s += hdsl::objective::smoothed_hinge(bilinear(mat, &x, &diff));
    }
    s / triplets.len() as f64
}
