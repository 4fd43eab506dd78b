//! Predict signed links between power-law sparse samples.
//!
//! The default is a reduced instance; `--full` uses 50000 features.

use hdsl::evaluation::link_auc;
use hdsl::experiments::{link_data, run_link, LinkConfig};
use hdsl::DotProduct;

fn main() -> hdsl::Result<()> {
    let cfg = if std::env::args().any(|a| a == "--full") {
        LinkConfig::default()
    } else {
        LinkConfig { dim: 5000, n_samples: 300, n_train: 500, n_val: 500, n_test: 500, n_bases: 30, ..Default::default() }
    };
    let data = link_data(&cfg)?;
    println!(
        "{} samples, mean nnz {:.1}, {} training triplets",
        data.samples.len(),
        data.samples.mean_nnz(),
        data.triplets.len()
    );
    let report = run_link(&cfg, &data)?;
    println!("dot product test AUC {:.3}", link_auc(&DotProduct, &data.samples, &data.test)?);
    println!("learned     test AUC {:.3} (validation {:.3})", report.test_auc, report.val_auc);
    println!(
        "kept iterate {} of {} ({}), {} atoms, {:.1}s",
        report.best_iter,
        report.history.last().map_or(0, |h| h.k),
        report.stop,
        report.model.num_atoms(),
        report.seconds
    );
    Ok(())
}
