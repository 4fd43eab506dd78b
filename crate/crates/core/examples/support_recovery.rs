//! Recover a planted sparse similarity from triplets it generated.
//!
//! Pass `--full` for the full-size run (2000 features, 30000 triplets).

use hdsl::experiments::{recovery_data, run_recovery, RecoveryConfig};
use hdsl::Oracle;

fn main() -> hdsl::Result<()> {
    let full = std::env::args().any(|a| a == "--full");
    let base = if full {
        RecoveryConfig { oracle: Oracle::Heuristic { size: 1000 }, iters: 3000, eval_every: 250, ..Default::default() }
    } else {
        RecoveryConfig {
            dim: 300,
            n_bases: 20,
            n_samples: 1000,
            sparsity: 0.05,
            n_triplets: 5000,
            lambda: 30.0,
            iters: 600,
            oracle: Oracle::Heuristic { size: 500 },
            eval_every: 100,
            ..Default::default()
        }
    };
    for alpha in [0.1, 0.3] {
        let cfg = RecoveryConfig { alpha, ..base.clone() };
        let data = recovery_data(&cfg)?;
        let report = run_recovery(&cfg, &data)?;
        println!("alpha = {alpha} ({:.1}s)", report.seconds);
        println!("{:>6} {:>8} {:>8}", "iter", "feature", "entry");
        for p in &report.curve {
            println!("{:>6} {:>8.3} {:>8.3}", p.k, p.feature_auc, p.entry_auc);
        }
    }
    Ok(())
}
