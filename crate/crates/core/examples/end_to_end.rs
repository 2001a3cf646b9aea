//! Run the full experiment (corpus, UBM, adaptation, cohort, scoring,
//! features, deciders, evaluation) into a work directory and print the
//! summary table.
//!
//! ```bash
//! cargo run --release -p cohortsv --example end_to_end -- /tmp/cohortsv-run
//! ```

use std::path::PathBuf;

use cohortsv::features::Condition;
use cohortsv::pipeline::{run_all, DeciderKind, ExperimentConfig, Layout};

fn main() -> cohortsv::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cohortsv-run"));
    let cfg = ExperimentConfig::bundled();
    let summary = run_all(&cfg, &Layout::new(&dir))?;

    print!("{}", summary.to_csv());
    let c3 = summary.eer(DeciderKind::Mlp, Condition::C3).unwrap_or(f64::NAN);
    println!(
        "\nbaseline LLR EER {:.3}%, MLP on C3 {:.3}%; outputs in {}",
        100.0 * summary.baseline.eer,
        100.0 * c3,
        dir.display()
    );
    Ok(())
}
