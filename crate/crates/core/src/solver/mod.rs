//! Frank-Wolfe with away steps over the convex hull of the scaled bases.

pub mod bounds;
pub mod direction;
pub mod gradient;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BasisId, Model};
use crate::objective::{
    grad_inner_with_model, init_cache, objective, BasisInners, ConstraintSet, MarginCache, StepKind,
};

pub use bounds::{convergence_bound, excess_risk_bound, lipschitz_constant, RiskBoundParams};
pub use direction::{
    away_direction, choose_direction, forward_full, forward_heuristic, forward_minibatch,
    line_search, Direction,
};
pub use gradient::{forward_exact, gradient_accumulate, GradientAccumulators, ScoredBasis};

/// Atoms at or below this weight are dropped.
pub const DROP_WEIGHT: f64 = 1e-12;

/// How the forward basis is picked each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Oracle {
    /// Global minimizer over all bases.
    Exact,
    /// Exact search on gradients from a random subset of constraints.
    MiniBatch { size: usize },
    /// Two restricted row searches on a random subset of constraints.
    Heuristic { size: usize },
}

impl Oracle {
    /// Same oracle with the batch capped at `t` constraints.
    pub fn capped(self, t: usize) -> Self {
        match self {
            Oracle::Exact => Oracle::Exact,
            Oracle::MiniBatch { size } => Oracle::MiniBatch { size: size.min(t) },
            Oracle::Heuristic { size } => Oracle::Heuristic { size: size.min(t) },
        }
    }
}

impl fmt::Display for Oracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Oracle::Exact => write!(f, "exact"),
            Oracle::MiniBatch { size } => write!(f, "minibatch({size})"),
            Oracle::Heuristic { size } => write!(f, "heuristic({size})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub oracle: Oracle,
    pub line_search_tol: f64,
    /// Stop once the duality gap drops to this value (exact oracle only).
    pub gap_tol: f64,
    pub seed: u64,
    /// Validation rounds without improvement before stopping; 0 disables.
    pub patience: usize,
    /// Iterations between validation rounds.
    pub eval_every: usize,
    pub deterministic: bool,
    /// Margins are recomputed from scratch at this cadence.
    pub recompute_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iters: 1000,
            oracle: Oracle::Exact,
            line_search_tol: 1e-6,
            gap_tol: 1e-5,
            seed: 0,
            patience: 10,
            eval_every: 50,
            deterministic: true,
            recompute_every: 1000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, num_constraints: usize) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.line_search_tol > 0.0) {
            return Err(Error::Config("line-search tolerance must be positive".into()));
        }
        if self.gap_tol < 0.0 || self.gap_tol.is_nan() {
            return Err(Error::Config("gap tolerance must be non-negative".into()));
        }
        if self.eval_every == 0 || self.recompute_every == 0 {
            return Err(Error::Config("evaluation and recompute cadences must be positive".into()));
        }
        if let Oracle::MiniBatch { size } | Oracle::Heuristic { size } = self.oracle {
            if size == 0 || size > num_constraints {
                return Err(Error::Config(format!(
                    "batch size must lie in 1..={num_constraints}, got {size}"
                )));
            }
        }
        Ok(())
    }
}

/// State after iteration `k`; `step` and `gamma` describe the move that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub objective: f64,
    pub gap: f64,
    pub step: StepKind,
    pub gamma: f64,
    pub atoms: usize,
    pub features: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_metric: Option<f64>,
}

impl IterationRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Writes one JSON object per line.
pub fn write_history<W: std::io::Write>(history: &[IterationRecord], mut out: W) -> Result<()> {
    for r in history {
        writeln!(out, "{}", r.to_json())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Maximize,
    Minimize,
}

/// Metric evaluated on held-out data for early stopping and model selection.
pub struct Validator<'v> {
    goal: Goal,
    metric: Box<dyn FnMut(&Model) -> f64 + 'v>,
}

impl<'v> Validator<'v> {
    pub fn new(goal: Goal, metric: impl FnMut(&Model) -> f64 + 'v) -> Self {
        Self { goal, metric: Box::new(metric) }
    }

    fn improves(&self, value: f64, best: Option<f64>) -> bool {
        match best {
            None => !value.is_nan(),
            Some(b) => match self.goal {
                Goal::Maximize => value > b,
                Goal::Minimize => value < b,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    /// Duality gap under tolerance.
    Converged,
    /// Every constraint has margin at least 1.
    Satisfied,
    /// Validation stopped improving.
    Patience,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StopReason::MaxIters => "max_iters",
            StopReason::Converged => "converged",
            StopReason::Satisfied => "satisfied",
            StopReason::Patience => "patience",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Best model on validation when a validator was given, else the last iterate.
    pub model: Model,
    pub history: Vec<IterationRecord>,
    pub best_iter: usize,
    pub stop: StopReason,
}

/// Iterate, margin cache and per-atom inner products.
pub struct Solver<'c, 'a> {
    cs: &'c ConstraintSet<'a>,
    cfg: SolverConfig,
    model: Model,
    cache: MarginCache,
    inners: FxHashMap<BasisId, BasisInners>,
    k: usize,
    last_step: (StepKind, f64),
    rng: ChaCha8Rng,
}

impl<'c, 'a> Solver<'c, 'a> {
    /// Starts from `Pos(0, 1)` and takes one full step to the oracle's basis.
    pub fn new(cs: &'c ConstraintSet<'a>, cfg: SolverConfig) -> Result<Self> {
        if cs.is_empty() {
            return Err(Error::EmptyConstraints);
        }
        if cs.dim() < 2 {
            return Err(Error::Domain(format!("need at least two features, got {}", cs.dim())));
        }
        cfg.validate(cs.len())?;
        let start = BasisId::pos(0, 1);
        let model = Model::single(cfg.lambda, cs.dim(), start)?;
        let cache = init_cache(cs, &model);
        let mut inners = FxHashMap::default();
        inners.insert(start, cs.basis_inners(start, cfg.lambda));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut solver =
            Self { cs, cfg, model, cache, inners, k: 0, last_step: (StepKind::Forward, 1.0), rng };
        let first = solver.forward()?;
        solver.apply_step(&first, 1.0)?;
        solver.k = 0;
        solver.last_step = (StepKind::Forward, 1.0);
        Ok(solver)
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn cache(&self) -> &MarginCache {
        &self.cache
    }

    pub fn iteration(&self) -> usize {
        self.k
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn objective(&self) -> f64 {
        objective(&self.cache).expect("non-empty constraint set")
    }

    /// Forward direction from the configured oracle.
    pub fn forward(&mut self) -> Result<Direction> {
        let lambda = self.cfg.lambda;
        match self.cfg.oracle {
            Oracle::Exact => forward_full(self.cs, &self.cache, lambda),
            Oracle::MiniBatch { size } => {
                forward_minibatch(self.cs, &self.cache, size, lambda, &mut self.rng)
            }
            Oracle::Heuristic { size } => {
                forward_heuristic(self.cs, &self.cache, size, lambda, &mut self.rng)
            }
        }
    }

    pub fn away(&self) -> Direction {
        direction::away_from_cached(&self.model, &self.inners, &self.cache)
    }

    /// `<M - B_F, grad f>`.
    pub fn fw_gap(&self, fwd: &Direction) -> f64 {
        grad_inner_with_model(&self.cache) - fwd.score
    }

    /// Moves the iterate by `gamma` along `dir` and updates the margins.
    pub fn apply_step(&mut self, dir: &Direction, gamma: f64) -> Result<()> {
        if !(0.0..=dir.gamma_max).contains(&gamma) {
            return Err(Error::StepOutOfRange { gamma, gamma_max: dir.gamma_max });
        }
        self.last_step = (dir.kind, gamma);
        self.k += 1;
        if gamma == 0.0 {
            return Ok(());
        }
        let basis = dir.basis;
        match dir.kind {
            StepKind::Forward if gamma == 1.0 => {
                let atoms = self.model.atoms_mut();
                atoms.clear();
                atoms.insert(basis, 1.0);
                self.inners.retain(|b, _| *b == basis);
                self.inners.entry(basis).or_insert_with(|| dir.inners.clone());
                self.cache = MarginCache::from_margins(dir.inners.to_dense());
            }
            StepKind::Forward => {
                for w in self.model.atoms_mut().values_mut() {
                    *w *= 1.0 - gamma;
                }
                *self.model.atoms_mut().entry(basis).or_insert(0.0) += gamma;
                self.inners.entry(basis).or_insert_with(|| dir.inners.clone());
                self.cache.update(StepKind::Forward, gamma, &dir.inners)?;
            }
            StepKind::Away => {
                let atoms = self.model.atoms_mut();
                for w in atoms.values_mut() {
                    *w *= 1.0 + gamma;
                }
                *atoms.get_mut(&basis).expect("away basis is active") -= gamma;
                if gamma == dir.gamma_max {
                    atoms.insert(basis, 0.0);
                }
                self.cache.update(StepKind::Away, gamma, &dir.inners)?;
            }
        }
        self.prune();
        if self.k % self.cfg.recompute_every == 0 {
            self.cache = init_cache(self.cs, &self.model);
        }
        self.model.check_invariants()
    }

    fn prune(&mut self) {
        loop {
            let small = self
                .model
                .atoms()
                .iter()
                .find(|(_, &w)| w <= DROP_WEIGHT)
                .map(|(b, &w)| (*b, w));
            let Some((b, w)) = small else { break };
            if self.model.num_atoms() == 1 {
                break;
            }
            let atoms = self.model.atoms_mut();
            atoms.remove(&b);
            let scale = 1.0 / (1.0 - w);
            for v in atoms.values_mut() {
                *v *= scale;
            }
            let inners = self.inners.remove(&b).expect("active atom has inners");
            self.cache.remove_residual(w, &inners);
        }
        let sum: f64 = self.model.atoms().values().sum();
        if (sum - 1.0).abs() > DROP_WEIGHT {
            for v in self.model.atoms_mut().values_mut() {
                *v /= sum;
            }
        }
    }

    fn record(&self, gap: f64, val_metric: Option<f64>) -> IterationRecord {
        IterationRecord {
            k: self.k,
            objective: self.objective(),
            gap,
            step: self.last_step.0,
            gamma: self.last_step.1,
            atoms: self.model.num_atoms(),
            features: self.model.active_features().len(),
            val_metric,
        }
    }

    /// One iteration: choose a direction, line-search it and step. Returns the
    /// record of the iterate before the step and the direction taken.
    pub fn step(&mut self) -> Result<(IterationRecord, Direction, f64)> {
        let fwd = self.forward()?;
        let rec = self.record(self.fw_gap(&fwd), None);
        let (dir, gamma) = self.descend(fwd)?;
        Ok((rec, dir, gamma))
    }

    fn descend(&mut self, fwd: Direction) -> Result<(Direction, f64)> {
        let away = self.away();
        let dir = choose_direction(fwd, away, &self.cache);
        let gamma = line_search(&self.cache, &dir, self.cfg.line_search_tol);
        self.apply_step(&dir, gamma)?;
        Ok((dir, gamma))
    }

    /// Runs until a stopping rule fires.
    pub fn run(mut self, mut validator: Option<Validator<'_>>) -> Result<TrainOutput> {
        let mut history = Vec::new();
        let mut best: Option<(f64, usize, Model)> = None;
        let mut stale = 0;
        let stop = loop {
            let fwd = self.forward()?;
            let gap = self.fw_gap(&fwd);
            let mut val_metric = None;
            let mut patience_out = false;
            if let Some(v) = validator.as_mut() {
                if self.k % self.cfg.eval_every == 0 || self.k == self.cfg.max_iters {
                    let value = (v.metric)(&self.model);
                    val_metric = Some(value);
                    if v.improves(value, best.as_ref().map(|b| b.0)) {
                        best = Some((value, self.k, self.model.clone()));
                        stale = 0;
                    } else {
                        stale += 1;
                        patience_out = self.cfg.patience > 0 && stale >= self.cfg.patience;
                    }
                }
            }
            let rec = self.record(gap, val_metric);
            let satisfied = rec.objective == 0.0;
            log::debug!("{}", rec.to_json());
            history.push(rec);
            if satisfied {
                break StopReason::Satisfied;
            }
            if self.cfg.oracle == Oracle::Exact && gap <= self.cfg.gap_tol {
                break StopReason::Converged;
            }
            if patience_out {
                break StopReason::Patience;
            }
            if self.k >= self.cfg.max_iters {
                break StopReason::MaxIters;
            }
            self.descend(fwd)?;
        };
        let (model, best_iter) = match best {
            Some((_, k, m)) => (m, k),
            None => (self.model, self.k),
        };
        Ok(TrainOutput { model, history, best_iter, stop })
    }
}

pub fn train(cs: &ConstraintSet<'_>, cfg: SolverConfig) -> Result<TrainOutput> {
    Solver::new(cs, cfg)?.run(None)
}

pub fn train_with_validation(
    cs: &ConstraintSet<'_>,
    cfg: SolverConfig,
    validator: Validator<'_>,
) -> Result<TrainOutput> {
    Solver::new(cs, cfg)?.run(Some(validator))
}
