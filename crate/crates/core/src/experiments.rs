//! End-to-end synthetic protocols: support recovery and link prediction.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constraints::{link_triplets, truth_triplets, Link};
use crate::error::Result;
use crate::evaluation::{entry_recovery_auc, feature_recovery_auc, link_auc, truth_entries, truth_features};
use crate::model::Model;
use crate::objective::ConstraintSet;
use crate::solver::{Goal, IterationRecord, Oracle, Solver, SolverConfig, StopReason, Validator};
use crate::sparse_data::{Dataset, TripletConstraint};
use crate::synthetic::{gen_links, gen_powerlaw_sparse, gen_truth, gen_truth_frequent, gen_uniform_sparse};

/// Seeds for the data generator and the solver, derived from one run seed.
fn seeds(seed: u64) -> (ChaCha8Rng, u64) {
    (ChaCha8Rng::seed_from_u64(seed), seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    pub dim: usize,
    pub n_bases: usize,
    pub concentration: f64,
    /// Restrict truth bases to two diagonal blocks.
    pub blocks: bool,
    pub n_samples: usize,
    pub sparsity: f64,
    pub n_triplets: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub iters: usize,
    pub oracle: Oracle,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self {
            dim: 2000,
            n_bases: 100,
            concentration: 9.0,
            blocks: false,
            n_samples: 5000,
            sparsity: 0.02,
            n_triplets: 30_000,
            alpha: 0.1,
            lambda: 100.0,
            iters: 5000,
            oracle: Oracle::MiniBatch { size: 1000 },
            eval_every: 100,
            seed: 0,
        }
    }
}

/// Generated inputs of one recovery run.
#[derive(Debug, Clone)]
pub struct RecoveryData {
    pub truth: Model,
    pub samples: Dataset,
    pub triplets: Vec<TripletConstraint>,
    pub solver_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryPoint {
    pub k: usize,
    pub feature_auc: f64,
    pub entry_auc: f64,
}

#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub model: Model,
    pub history: Vec<IterationRecord>,
    pub curve: Vec<RecoveryPoint>,
    pub seconds: f64,
}

impl RecoveryReport {
    pub fn last(&self) -> RecoveryPoint {
        *self.curve.last().expect("curve has the final iterate")
    }
}

pub fn recovery_data(cfg: &RecoveryConfig) -> Result<RecoveryData> {
    let (mut rng, solver_seed) = seeds(cfg.seed);
    let blocks = [cfg.dim / 10..cfg.dim * 4 / 10, cfg.dim * 6 / 10..cfg.dim * 9 / 10];
    let truth = gen_truth(cfg.dim, cfg.n_bases, cfg.blocks.then_some(&blocks[..]), cfg.concentration, &mut rng)?;
    let samples = gen_uniform_sparse(cfg.n_samples, cfg.dim, cfg.sparsity, &mut rng)?;
    let triplets = truth_triplets(&samples, &truth, cfg.alpha, cfg.n_triplets, &mut rng)?;
    Ok(RecoveryData { truth, samples, triplets, solver_seed })
}

/// Trains on the truth-derived triplets and tracks both recovery AUCs every
/// `eval_every` iterations and at the last iterate.
pub fn run_recovery(cfg: &RecoveryConfig, data: &RecoveryData) -> Result<RecoveryReport> {
    let start = Instant::now();
    let features = truth_features(&data.truth);
    let entries = truth_entries(&data.truth);
    let cs = ConstraintSet::new(&data.samples, data.triplets.clone())?;
    let solver_cfg = SolverConfig {
        lambda: cfg.lambda,
        max_iters: cfg.iters,
        oracle: cfg.oracle.capped(cs.len()),
        seed: data.solver_seed,
        gap_tol: 0.0,
        ..SolverConfig::default()
    };
    let mut solver = Solver::new(&cs, solver_cfg)?;
    let mut history = Vec::new();
    let mut curve = Vec::new();
    let point = |k: usize, m: &Model| -> Result<RecoveryPoint> {
        Ok(RecoveryPoint {
            k,
            feature_auc: feature_recovery_auc(m, &features)?,
            entry_auc: entry_recovery_auc(m, &entries)?,
        })
    };
    while solver.iteration() < cfg.iters {
        let k = solver.iteration();
        if k % cfg.eval_every == 0 {
            curve.push(point(k, solver.model())?);
        }
        let (rec, _, _) = solver.step()?;
        let done = rec.objective == 0.0;
        history.push(rec);
        if done {
            break;
        }
    }
    curve.push(point(solver.iteration(), solver.model())?);
    Ok(RecoveryReport {
        model: solver.model().clone(),
        history,
        curve,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Average density `0.02` at `d = 5000` falling log-linearly to `0.002` at `d = 10^6`.
pub fn link_sparsity(dim: usize) -> f64 {
    let (d0, d1, s0, s1) = (5_000f64, 1_000_000f64, 0.02f64, 0.002f64);
    let t = ((dim as f64).ln() - d0.ln()) / (d1.ln() - d0.ln());
    (s0.ln() + t.clamp(0.0, 1.0) * (s1.ln() - s0.ln())).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub dim: usize,
    pub n_samples: usize,
    /// Mean fraction of features present per sample; `None` uses [`link_sparsity`].
    pub sparsity: Option<f64>,
    pub exponent: f64,
    pub min_freq: f64,
    pub n_bases: usize,
    pub concentration: f64,
    pub top_frac: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub per_link: usize,
    pub lambda: f64,
    pub iters: usize,
    pub oracle: Oracle,
    pub eval_every: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            dim: 50_000,
            n_samples: 500,
            sparsity: None,
            exponent: 0.5,
            min_freq: 0.1,
            n_bases: 100,
            concentration: 9.0,
            top_frac: 0.05,
            n_train: 1000,
            n_val: 1000,
            n_test: 1000,
            per_link: 4,
            lambda: 10.0,
            iters: 2000,
            oracle: Oracle::Heuristic { size: 1000 },
            eval_every: 50,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkData {
    pub truth: Model,
    pub samples: Dataset,
    pub train: Vec<Link>,
    pub val: Vec<Link>,
    pub test: Vec<Link>,
    pub triplets: Vec<TripletConstraint>,
    pub solver_seed: u64,
}

#[derive(Debug, Clone)]
pub struct LinkReport {
    pub model: Model,
    pub history: Vec<IterationRecord>,
    pub best_iter: usize,
    pub stop: StopReason,
    pub val_auc: f64,
    pub test_auc: f64,
    pub seconds: f64,
}

pub fn link_data(cfg: &LinkConfig) -> Result<LinkData> {
    let (mut rng, solver_seed) = seeds(cfg.seed);
    let sparsity = cfg.sparsity.unwrap_or_else(|| link_sparsity(cfg.dim));
    let samples = gen_powerlaw_sparse(cfg.n_samples, cfg.dim, sparsity, cfg.exponent, &mut rng)?;
    let truth = gen_truth_frequent(cfg.dim, cfg.n_bases, &samples, cfg.min_freq, cfg.concentration, &mut rng)?;
    let total = cfg.n_train + cfg.n_val + cfg.n_test;
    let mut links = gen_links(&samples, &truth, total, cfg.top_frac, &mut rng)?;
    let test = links.split_off(cfg.n_train + cfg.n_val);
    let val = links.split_off(cfg.n_train);
    let train = links;
    let triplets = link_triplets(samples.len(), &train, cfg.per_link, &mut rng)?.triplets;
    Ok(LinkData { truth, samples, train, val, test, triplets, solver_seed })
}

/// Trains on the link triplets with early stopping on validation AUC and
/// scores the selected model on the test links.
pub fn run_link(cfg: &LinkConfig, data: &LinkData) -> Result<LinkReport> {
    let start = Instant::now();
    let cs = ConstraintSet::new(&data.samples, data.triplets.clone())?;
    let solver_cfg = SolverConfig {
        lambda: cfg.lambda,
        max_iters: cfg.iters,
        oracle: cfg.oracle.capped(cs.len()),
        seed: data.solver_seed,
        gap_tol: 0.0,
        eval_every: cfg.eval_every,
        patience: cfg.patience,
        ..SolverConfig::default()
    };
    let validator = Validator::new(Goal::Maximize, |m: &Model| {
        link_auc(m, &data.samples, &data.val).unwrap_or(f64::NAN)
    });
    let out = Solver::new(&cs, solver_cfg)?.run(Some(validator))?;
    let val_auc = link_auc(&out.model, &data.samples, &data.val)?;
    let test_auc = link_auc(&out.model, &data.samples, &data.test)?;
    Ok(LinkReport {
        model: out.model,
        history: out.history,
        best_iter: out.best_iter,
        stop: out.stop,
        val_auc,
        test_auc,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparsity_schedule_endpoints() {
        assert!((link_sparsity(5_000) - 0.02).abs() < 1e-15);
        assert!((link_sparsity(1_000_000) - 0.002).abs() < 1e-15);
        let mid = link_sparsity(50_000);
        assert!(mid < 0.02 && mid > 0.002);
    }

    #[test]
    fn small_recovery_improves_on_chance() {
        let cfg = RecoveryConfig {
            dim: 60,
            n_bases: 10,
            n_samples: 300,
            sparsity: 0.1,
            n_triplets: 2000,
            lambda: 10.0,
            iters: 300,
            oracle: Oracle::Exact,
            eval_every: 50,
            ..RecoveryConfig::default()
        };
        let data = recovery_data(&cfg).unwrap();
        let report = run_recovery(&cfg, &data).unwrap();
        assert!(report.last().feature_auc > 0.8, "{:?}", report.last());
        let again = run_recovery(&cfg, &recovery_data(&cfg).unwrap()).unwrap();
        assert_eq!(report.history, again.history);
    }

    #[test]
    fn small_link_run_is_consistent() {
        let cfg = LinkConfig {
            dim: 400,
            n_samples: 120,
            sparsity: Some(0.05),
            n_bases: 10,
            n_train: 150,
            n_val: 150,
            n_test: 150,
            iters: 200,
            oracle: Oracle::Exact,
            ..LinkConfig::default()
        };
        let data = link_data(&cfg).unwrap();
        assert_eq!((data.train.len(), data.val.len(), data.test.len()), (150, 150, 150));
        assert!(data.triplets.len() <= 4 * 150);
        let report = run_link(&cfg, &data).unwrap();
        assert!((0.0..=1.0).contains(&report.test_auc));
        assert!(report.best_iter <= report.history.last().unwrap().k);
    }
}
