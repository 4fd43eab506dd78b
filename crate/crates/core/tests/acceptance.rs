//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails.
//!
//! Run a subset with `cargo test --test acceptance -- 3 6`. The real-data
//! check runs only when `HDSL_DEXTER_DIR` points at converted dexter files.

mod common;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use hdsl::constraints::random_label_triplets;
use hdsl::evaluation::knn_error;
use hdsl::experiments::{link_data, recovery_data, run_link, run_recovery, LinkConfig, RecoveryConfig};
use hdsl::objective::{init_cache, smoothed_hinge, smoothed_hinge_deriv, ConstraintSet};
use hdsl::solver::bounds::{convergence_bound, excess_risk_bound, lipschitz_constant, RiskBoundParams};
use hdsl::solver::{forward_exact, gradient_accumulate, Direction, ScoredBasis};
use hdsl::sparse_data::{read_libsvm_file, FeatureScaler};
use hdsl::synthetic::gen_uniform_sparse;
use hdsl::{
    train_with_validation, DotProduct, Goal, IterationRecord, Model, Oracle, Solver, SolverConfig,
    StepKind, Validator,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Structural checks on a solver trace and the model it ends at.
fn structure(history: &[IterationRecord], model: &Model, k: usize, seed: u64) -> Result<(), String> {
    for r in history {
        if r.atoms > r.k + 1 || r.features > 2 * (r.k + 1) {
            return Err(format!("k={} atoms={} features={}", r.k, r.atoms, r.features));
        }
    }
    model_structure(model, k, seed)
}

fn model_structure(model: &Model, k: usize, seed: u64) -> Result<(), String> {
    let sum: f64 = model.atoms().values().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("weights sum to {sum}"));
    }
    if model.num_atoms() > k + 1 || model.nnz() > 4 * (k + 1) || model.active_features().len() > 2 * (k + 1) {
        return Err(format!("k={k} atoms={} nnz={}", model.num_atoms(), model.nnz()));
    }
    let mut r = rng(seed);
    let density = (20.0 / model.dim() as f64).min(0.5);
    for _ in 0..100 {
        let x = random_vector(&mut r, model.dim(), density);
        let s = model.similarity(&x, &x).unwrap();
        if s < -1e-10 {
            return Err(format!("self-similarity {s}"));
        }
    }
    Ok(())
}

fn gradient() -> Outcome {
    let h = 1e-6;
    let worst = (0..=400)
        .map(|i| {
            let m = -2.0 + i as f64 * 0.01;
            let fd = (smoothed_hinge(m + h) - smoothed_hinge(m - h)) / (2.0 * h);
            (fd - smoothed_hinge_deriv(m)).abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-6, format!("max |fd - deriv| = {worst:.2e} over 401 points"))
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(2);
    let lambdas = [0.5, 1.0, 10.0];
    for inst in 0..50 {
        let dim = r.gen_range(2..=30);
        let t = r.gen_range(1..=50);
        let lambda = lambdas[inst % 3];
        let density = r.gen_range(0.05..0.5);
        let ds = random_dataset(&mut r, 20, dim, density);
        let tr = random_triplets(&mut r, 20, t);
        let atoms = r.gen_range(1..=3).min(dim * (dim - 1));
        let m = random_model(&mut r, dim, atoms, lambda);
        let cs = ConstraintSet::new(&ds, tr.clone()).unwrap();
        let got = forward_exact(&gradient_accumulate(&cs, &init_cache(&cs, &m), None), lambda, dim).unwrap();
        let g = dense_gradient(&ds, &tr, &dense_matrix(&m));
        let scored: Vec<_> = all_bases(dim).into_iter().map(|b| (b, dense_score(&g, b, lambda))).collect();
        let min = scored.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let expected = scored.iter().find(|s| s.1 <= min + 1e-10).unwrap().0;
        if (got.score - min).abs() > 1e-10 || got.basis != expected {
            return outcome(false, format!("instance {inst}: got {} ({}) want {expected} ({min})", got.basis, got.score));
        }
    }
    outcome(true, "50 instances match brute force")
}

fn bookkeeping() -> Outcome {
    let mut r = rng(3);
    let ds = gen_uniform_sparse(100, 50, 0.1, &mut r).unwrap();
    let tr = random_triplets(&mut r, 100, 200);
    let cs = ConstraintSet::new(&ds, tr).unwrap();
    let lambda = 10.0;
    let cfg = SolverConfig { lambda, max_iters: 0, gap_tol: 0.0, recompute_every: usize::MAX, ..SolverConfig::default() };
    let mut s = Solver::new(&cs, cfg).unwrap();
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    while accepted < 100 {
        let dir = match r.gen_range(0..3) {
            0 => {
                let b = random_basis(&mut r, 50);
                Direction::forward(&cs, ScoredBasis { basis: b, score: 0.0 }, lambda)
            }
            1 => {
                let atoms: Vec<_> = s.model().atoms().iter().map(|(b, w)| (*b, *w)).collect();
                let (b, w) = atoms[r.gen_range(0..atoms.len())];
                Direction {
                    kind: StepKind::Away,
                    basis: b,
                    gamma_max: if w < 1.0 { w / (1.0 - w) } else { 0.0 },
                    inners: cs.basis_inners(b, lambda),
                    score: 0.0,
                }
            }
            _ => {
                s.step().unwrap();
                accepted += 1;
                continue;
            }
        };
        let gamma = r.gen_range(0.0..1.2) * dir.gamma_max;
        if s.apply_step(&dir, gamma).is_ok() {
            accepted += 1;
            if let Err(e) = model_structure(s.model(), s.iteration(), accepted) {
                return outcome(false, format!("structure after {accepted} steps: {e}"));
            }
        }
    }
    let fresh = init_cache(&cs, s.model());
    for (a, b) in s.cache().margins().iter().zip(fresh.margins()) {
        worst = worst.max((a - b).abs());
    }
    outcome(worst <= 1e-8, format!("max margin drift {worst:.2e} after 100 steps, {} atoms", s.model().num_atoms()))
}

fn convergence() -> Outcome {
    let mut r = rng(4);
    let ds = gen_uniform_sparse(100, 50, 0.1, &mut r).unwrap();
    let tr = random_triplets(&mut r, 100, 200);
    let cs = ConstraintSet::new(&ds, tr).unwrap();
    let lambda = 10.0;
    let cfg = SolverConfig { lambda, max_iters: 100_000, gap_tol: 0.0, ..SolverConfig::default() };
    let out = Solver::new(&cs, cfg).unwrap().run(None).unwrap();
    let f_star = out.history.iter().map(|h| h.objective).fold(f64::INFINITY, f64::min);
    let lip = lipschitz_constant(&cs);
    for w in out.history.windows(2) {
        if w[1].objective > w[0].objective + 1e-12 {
            return outcome(false, format!("objective rose at k={}", w[1].k));
        }
    }
    let mut tightest = f64::INFINITY;
    for h in out.history.iter().filter(|h| (1..=2000).contains(&h.k)) {
        let bound = convergence_bound(lambda, lip, h.k).unwrap();
        let excess = h.objective - f_star;
        if excess > bound {
            return outcome(false, format!("k={} excess {excess} > bound {bound}", h.k));
        }
        tightest = tightest.min(bound - excess);
    }
    let last = out.history.last().unwrap();
    if let Err(e) = structure(&out.history, &out.model, last.k, 40) {
        return outcome(false, e);
    }
    outcome(
        true,
        format!("f* = {f_star:.6} after {} iterations ({}), L = {lip:.3}, min slack {tightest:.3e}", last.k, out.stop),
    )
}

fn factorization() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dim = r.gen_range(5..300);
        let atoms = r.gen_range(1..=40usize).min(dim * (dim - 1));
        let lambda = r.gen_range(0.1..100.0);
        let m = random_model(&mut r, dim, atoms, lambda);
        let map = m.factorize();
        let density = (10.0 / dim as f64).min(0.5);
        for _ in 0..1000 {
            let x = random_vector(&mut r, dim, density);
            let y = random_vector(&mut r, dim, density);
            let (px, py) = (map.project(&x).unwrap(), map.project(&y).unwrap());
            let dot: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum();
            worst = worst.max((dot - m.similarity(&x, &y).unwrap()).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max error {worst:.2e} over 20 models x 1000 pairs"))
}

fn recovery(structural: &mut Vec<String>) -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (alpha, threshold) in [(0.1, 0.95), (0.3, 0.85)] {
        let mut aucs = Vec::new();
        for seed in 0..3 {
            let cfg = RecoveryConfig {
                alpha,
                oracle: Oracle::Heuristic { size: 1000 },
                iters: 5000,
                eval_every: 500,
                seed,
                ..RecoveryConfig::default()
            };
            let data = recovery_data(&cfg).unwrap();
            let rep = run_recovery(&cfg, &data).unwrap();
            let last = rep.last();
            if let Err(e) = structure(&rep.history, &rep.model, last.k, seed) {
                structural.push(format!("recovery alpha={alpha} seed={seed}: {e}"));
            }
            aucs.push((last.feature_auc, last.entry_auc, rep.seconds));
        }
        let feat = aucs.iter().map(|a| a.0).sum::<f64>() / 3.0;
        let entry = aucs.iter().map(|a| a.1).sum::<f64>() / 3.0;
        let secs: f64 = aucs.iter().map(|a| a.2).sum();
        pass &= feat >= threshold;
        lines.push(format!("alpha={alpha}: feature AUC {feat:.3} (>= {threshold}), entry AUC {entry:.3}, {secs:.0}s"));
    }
    outcome(pass, lines.join("; "))
}

fn link(structural: &mut Vec<String>) -> Outcome {
    let mut aucs = Vec::new();
    let mut secs = 0.0;
    for seed in 0..3 {
        let cfg = LinkConfig { seed, ..LinkConfig::default() };
        let data = link_data(&cfg).unwrap();
        let rep = run_link(&cfg, &data).unwrap();
        if let Err(e) = structure(&rep.history, &rep.model, rep.best_iter, seed) {
            structural.push(format!("link seed={seed}: {e}"));
        }
        aucs.push(rep.test_auc);
        secs += rep.seconds;
    }
    let mean = aucs.iter().sum::<f64>() / 3.0;
    outcome(mean >= 0.88, format!("mean test AUC {mean:.3} (>= 0.88) over {aucs:.3?}, {secs:.0}s"))
}

fn dexter() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("HDSL_DEXTER_DIR")?);
    let load = |name: &str| read_libsvm_file(dir.join(name), Some(20_000)).ok();
    let train = load("train.svm")?;
    let valid = load("valid.svm")?;
    // test labels were never released; split validation in halves unless a labeled test file exists
    let (val, test) = match load("test.svm") {
        Some(t) if t.labels().is_some() => (valid, t),
        _ => {
            let half = valid.len() / 2;
            (valid.subset(&(0..half).collect::<Vec<_>>()), valid.subset(&(half..valid.len()).collect::<Vec<_>>()))
        }
    };
    let scaler = FeatureScaler::fit(&train);
    let (train, val, test) = (scaler.apply(&train), scaler.apply(&val), scaler.apply(&test));
    let dot = knn_error(&DotProduct, &train, &test, 3).unwrap();
    let mut r = rng(9);
    let triplets = random_label_triplets(&train, 20, &mut r).unwrap().triplets;
    let cs = ConstraintSet::new(&train, triplets).unwrap();
    let mut best: Option<(f64, f64, f64, usize)> = None;
    for lambda in [1.0, 10.0, 100.0, 1e3, 1e4, 1e5] {
        let cfg = SolverConfig {
            lambda,
            max_iters: 2000,
            oracle: Oracle::Heuristic { size: 1000 }.capped(cs.len()),
            eval_every: 10,
            patience: 20,
            ..SolverConfig::default()
        };
        let v = Validator::new(Goal::Minimize, |m: &Model| knn_error(m, &train, &val, 3).unwrap());
        let out = train_with_validation(&cs, cfg, v).unwrap();
        let val_err = knn_error(&out.model, &train, &val, 3).unwrap();
        if best.map_or(true, |b| val_err < b.1) {
            best = Some((lambda, val_err, knn_error(&out.model, &train, &test, 3).unwrap(), out.best_iter));
        }
    }
    let (lambda, _, err, iter) = best.unwrap();
    Some(outcome(
        err <= 0.085,
        format!("3-NN error {:.1}% (lambda={lambda}, iter {iter}), dot {:.1}%", 100.0 * err, 100.0 * dot),
    ))
}

fn bounds_oracle() -> Outcome {
    let mut r = rng(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let lambda = 10f64.powf(r.gen_range(-1.0..3.0));
        let lip = r.gen_range(0.0..10.0);
        let b = r.gen_range(0.0..2.0);
        let k = r.gen_range(1..100_000usize);
        let n = r.gen_range(3..1_000_000usize);
        let delta: f64 = r.gen_range(0.001..0.999);
        let bd = if r.gen_bool(0.5) { Some(r.gen_range(0.1..500.0)) } else { None };

        let opt = 16.0 * lip * lambda.powi(2) / (k as f64 + 2.0);
        let rad = 16.0 * lambda * b * (2.0 * (k as f64).ln() / (n / 3) as f64).sqrt();
        let dev = 5.0 * b * bd.unwrap_or(4.0 * lambda) * ((4.0 / delta).ln() / n as f64).sqrt();
        let want = opt + rad + dev;

        let got_opt = convergence_bound(lambda, lip, k).unwrap();
        let got = excess_risk_bound(RiskBoundParams {
            lambda,
            lipschitz: lip,
            data_bound: b,
            k,
            n,
            delta,
            model_bound: bd,
        })
        .unwrap();
        worst = worst.max((got_opt - opt).abs() / opt.abs().max(1.0));
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    outcome(worst <= 1e-12, format!("max relative error {worst:.2e} over 100 tuples"))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: usize| filter.is_empty() || filter.iter().any(|f| f == &n.to_string());
    let mut results: BTreeMap<usize, (&str, Outcome, f64)> = BTreeMap::new();
    let mut structural = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut(&mut Vec<String>) -> Option<Outcome>| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        match f(&mut structural) {
            Some(o) => {
                let secs = start.elapsed().as_secs_f64();
                println!("criterion {n:>2} {name:<24} {} {} [{secs:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                results.insert(n, (name, o, secs));
            }
            None => println!("criterion {n:>2} {name:<24} SKIP set HDSL_DEXTER_DIR to run"),
        }
    };
    run(1, "gradient", &mut |_| Some(gradient()));
    run(2, "oracle equivalence", &mut |_| Some(oracle_equivalence()));
    run(3, "bookkeeping", &mut |_| Some(bookkeeping()));
    run(4, "convergence bound", &mut |_| Some(convergence()));
    run(6, "factorization", &mut |_| Some(factorization()));
    run(7, "support recovery", &mut |s| Some(recovery(s)));
    run(8, "link prediction", &mut |s| Some(link(s)));
    run(9, "dexter k-NN", &mut |_| dexter());
    run(10, "bound diagnostics", &mut |_| Some(bounds_oracle()));
    if wanted(5) {
        let covered: Vec<usize> = [3, 4, 7, 8].into_iter().filter(|n| results.contains_key(n)).collect();
        let o = outcome(structural.is_empty(), if structural.is_empty() {
            format!("invariants held in the runs of criteria {covered:?}")
        } else {
            structural.join("; ")
        });
        println!("criterion  5 {:<24} {} {}", "structural invariants", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.insert(5, ("structural invariants", o, 0.0));
    }
    let failed: Vec<usize> = results.iter().filter(|(_, r)| !r.1.pass).map(|(n, _)| *n).collect();
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
