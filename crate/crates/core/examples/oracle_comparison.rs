//! Exact, sampled and heuristic forward oracles on one problem.

use std::time::Instant;

use hdsl::constraints::truth_triplets;
use hdsl::synthetic::{gen_truth, gen_uniform_sparse};
use hdsl::{train, ConstraintSet, Oracle, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hdsl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = gen_truth(500, 20, None, 9.0, &mut rng)?;
    let ds = gen_uniform_sparse(1000, 500, 0.04, &mut rng)?;
    let triplets = truth_triplets(&ds, &truth, 0.1, 6000, &mut rng)?;
    let cs = ConstraintSet::new(&ds, triplets)?;

    println!("{:<22} {:>10} {:>7} {:>9}", "oracle", "objective", "atoms", "ms/iter");
    for oracle in [Oracle::Exact, Oracle::MiniBatch { size: 600 }, Oracle::Heuristic { size: 600 }] {
        let cfg = SolverConfig { lambda: 20.0, max_iters: 300, oracle, gap_tol: 0.0, ..SolverConfig::default() };
        let start = Instant::now();
        let out = train(&cs, cfg)?;
        let last = out.history.last().expect("non-empty history");
        let ms = start.elapsed().as_secs_f64() * 1e3 / last.k.max(1) as f64;
        println!("{:<22} {:>10.5} {:>7} {:>9.2}", oracle.to_string(), last.objective, out.model.num_atoms(), ms);
    }
    Ok(())
}
