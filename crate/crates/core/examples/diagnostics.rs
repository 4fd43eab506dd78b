//! Duality gap trace next to the theoretical optimization and excess-risk bounds.

use hdsl::solver::bounds::{convergence_bound, excess_risk_bound, lipschitz_constant, RiskBoundParams};
use hdsl::synthetic::gen_uniform_sparse;
use hdsl::{train, ConstraintSet, SolverConfig, TripletConstraint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hdsl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ds = gen_uniform_sparse(200, 80, 0.1, &mut rng)?;
    let triplets: Vec<_> = (0..400)
        .map(|_| TripletConstraint::new(rng.gen_range(0..200), rng.gen_range(0..200), rng.gen_range(0..200)))
        .filter(|t| t.b != t.c)
        .collect();
    let cs = ConstraintSet::new(&ds, triplets)?;
    let lambda = 5.0;
    let lip = lipschitz_constant(&cs);
    println!("L = {lip:.4}");

    let out = train(&cs, SolverConfig { lambda, max_iters: 2000, gap_tol: 1e-4, ..SolverConfig::default() })?;
    println!("stopped: {} after {} iterations", out.stop, out.history.last().map_or(0, |h| h.k));
    println!("{:>6} {:>10} {:>10} {:>12} {:>6}", "iter", "objective", "gap", "rate bound", "step");
    for h in out.history.iter().filter(|h| h.k > 0 && (h.k.is_power_of_two() || h.k % 500 == 0)) {
        let bound = convergence_bound(lambda, lip, h.k)?;
        println!("{:>6} {:>10.5} {:>10.2e} {:>12.3} {:>6}", h.k, h.objective, h.gap, bound, format!("{:?}", h.step));
    }

    for n in [1_000, 100_000, 10_000_000] {
        let risk = excess_risk_bound(RiskBoundParams {
            lambda,
            lipschitz: lip,
            data_bound: 1.0,
            k: 1000,
            n,
            delta: 0.05,
            model_bound: None,
        })?;
        println!("excess risk bound at k=1000, n={n}: {risk:.3}");
    }
    Ok(())
}
