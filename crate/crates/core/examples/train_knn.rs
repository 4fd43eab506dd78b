//! Learn a similarity from nearest-neighbor triplets on labeled sparse data
//! and compare its k-NN error with the plain dot product.

use hdsl::constraints::neighbors_triplets;
use hdsl::evaluation::knn_error;
use hdsl::synthetic::{gen_truth, gen_uniform_sparse};
use hdsl::{train_with_validation, ConstraintSet, Dataset, DotProduct, Goal, Model, Oracle, SolverConfig, Validator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Labels points by which of two hidden prototypes they resemble more.
fn labeled(n: usize, seed: u64) -> hdsl::Result<(Dataset, Model)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 300;
    let hidden = gen_truth(dim, 6, None, 9.0, &mut rng)?;
    let raw = gen_uniform_sparse(n + 2, dim, 0.05, &mut rng)?;
    let (p, q) = (raw.point(0).clone(), raw.point(1).clone());
    let points: Vec<_> = raw.points()[2..].to_vec();
    let labels = points
        .iter()
        .map(|x| Ok((hidden.similarity(x, &p)? > hidden.similarity(x, &q)?) as i64))
        .collect::<hdsl::Result<Vec<_>>>()?;
    Ok((Dataset::new(points, Some(labels), dim)?, hidden))
}

fn main() -> hdsl::Result<()> {
    let (all, _) = labeled(900, 7)?;
    let train = all.subset(&(0..300).collect::<Vec<_>>());
    let val = all.subset(&(300..600).collect::<Vec<_>>());
    let test = all.subset(&(600..900).collect::<Vec<_>>());

    let generated = neighbors_triplets(&train, 3, 5, &DotProduct)?;
    println!("{} triplets, {} anchors skipped", generated.triplets.len(), generated.skipped);
    let cs = ConstraintSet::new(&train, generated.triplets)?;

    let cfg = SolverConfig {
        lambda: 10.0,
        max_iters: 1000,
        oracle: Oracle::Heuristic { size: 500 },
        eval_every: 20,
        patience: 10,
        ..SolverConfig::default()
    };
    let validator = Validator::new(Goal::Minimize, |m: &Model| knn_error(m, &train, &val, 3).unwrap_or(1.0));
    let out = train_with_validation(&cs, cfg, validator)?;

    println!("stopped: {} (best iterate {})", out.stop, out.best_iter);
    println!("dot product 3-NN error: {:.3}", knn_error(&DotProduct, &train, &test, 3)?);
    println!("learned     3-NN error: {:.3}", knn_error(&out.model, &train, &test, 3)?);
    println!("{} atoms over {} features", out.model.num_atoms(), out.model.active_features().len());
    Ok(())
}
