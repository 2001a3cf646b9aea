//! Compute the cohort score features for hand-written score vectors and show
//! how each condition C1..C7 assembles them.
//!
//! ```bash
//! cargo run -p cohortsv --example score_features
//! ```

use cohortsv::features::{
    assemble, feat_norm, feat_rank_diff, feat_rank_position, Condition, ScoreVector,
};

fn main() -> cohortsv::Result<()> {
    // Claimed-model, UBM and cohort average log-likelihoods of one utterance.
    let genuine = ScoreVector::new(-10.2, -10.9, vec![-10.8, -10.6, -11.0, -10.5])?;
    let imposter = ScoreVector::new(-10.9, -10.9, vec![-10.8, -10.6, -11.0, -10.5])?;

    for (name, sv) in [("genuine", &genuine), ("imposter", &imposter)] {
        println!("{name}");
        println!("  llr        {:+.3}", sv.llr());
        println!("  norm       {:+.3}", feat_norm(sv)?);
        println!("  rank pos   {}", feat_rank_position(sv));
        println!("  rank diff  {:?}", feat_rank_diff(sv));
    }

    println!();
    let k = genuine.cohort_size();
    for c in Condition::ALL {
        let f = assemble(&genuine, c)?;
        let cols = c.column_names(k);
        let shown: Vec<String> = cols.iter().zip(&f.values).map(|(n, v)| format!("{n}={v:.2}")).collect();
        println!("{c} (dim {}): {}", c.dimension(k), shown.join(" "));
    }
    Ok(())
}
