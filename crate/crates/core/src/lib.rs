//! Sparse bilinear similarity learning for high-dimensional sparse data.
//!
//! A model is a convex combination of scaled rank-one bases
//! `lambda (e_i +/- e_j)(e_i +/- e_j)^T`, fitted to triplet constraints with a
//! Frank-Wolfe solver that adds at most one basis per iteration.

pub mod cli;
pub mod constraints;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod model;
pub mod objective;
pub mod solver;
pub mod sparse_data;
pub mod synthetic;

pub use error::{Error, Result};
pub use constraints::{Generated, Link};
pub use model::{BasisId, DotProduct, Model, PairScorer, ProjectionMap, Sign};
pub use objective::{BasisInners, ConstraintSet, MarginCache, StepKind};
pub use solver::{
    train, train_with_validation, Goal, IterationRecord, Oracle, Solver, SolverConfig, StopReason,
    TrainOutput, Validator,
};
pub use sparse_data::{Dataset, SparseVector, TripletConstraint};
