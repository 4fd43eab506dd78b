//! Use a learned model as a linear embedding into as many dimensions as it has atoms.

use hdsl::constraints::truth_triplets;
use hdsl::synthetic::{gen_truth, gen_uniform_sparse};
use hdsl::{train, ConstraintSet, Oracle, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hdsl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth = gen_truth(1000, 10, None, 9.0, &mut rng)?;
    let ds = gen_uniform_sparse(800, 1000, 0.03, &mut rng)?;
    let triplets = truth_triplets(&ds, &truth, 0.1, 4000, &mut rng)?;
    let cs = ConstraintSet::new(&ds, triplets)?;

    for iters in [10, 50, 200] {
        let cfg = SolverConfig { lambda: 50.0, max_iters: iters, oracle: Oracle::Heuristic { size: 800 }, ..SolverConfig::default() };
        let model = train(&cs, cfg)?.model;
        let map = model.factorize();
        let (x, y) = (ds.point(0), ds.point(1));
        let (px, py) = (map.project(x)?, map.project(y)?);
        let dot: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum();
        println!(
            "{iters:>4} iterations: {} -> {} dims, projected dot {dot:.6}, similarity {:.6}",
            model.dim(),
            map.output_dim(),
            model.similarity(x, y)?
        );
    }
    Ok(())
}
