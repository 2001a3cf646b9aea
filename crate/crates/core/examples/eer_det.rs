//! Compute the EER and DET curve of a score list and print the curve as CSV.
//!
//! ```bash
//! cargo run -p cohortsv --example eer_det
//! ```

use cohortsv::metrics::{compute_eer, det_curve, Label};

fn main() -> cohortsv::Result<()> {
    let genuine = [2.1, 1.7, 1.5, 0.9, 0.4, -0.2];
    let imposter = [0.6, 0.1, -0.3, -0.5, -0.9, -1.4, -1.8, -2.2];
    let scores: Vec<f64> = genuine.iter().chain(&imposter).copied().collect();
    let labels: Vec<Label> = genuine
        .iter()
        .map(|_| Label::Genuine)
        .chain(imposter.iter().map(|_| Label::Imposter))
        .collect();

    let report = compute_eer(&scores, &labels)?;
    println!(
        "EER {:.2}% at threshold {:.3} ({} target / {} non-target trials)",
        100.0 * report.eer,
        report.eer_threshold,
        report.n_target,
        report.n_nontarget
    );

    println!("threshold,far,frr");
    for p in det_curve(&scores, &labels)? {
        println!("{},{:.4},{:.4}", p.threshold, p.far, p.frr);
    }
    Ok(())
}
