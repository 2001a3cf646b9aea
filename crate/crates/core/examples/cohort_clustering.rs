//! Cluster adapted speaker models with weighted-KL K-means into a cohort and
//! print the cost-versus-k curve.
//!
//! ```bash
//! cargo run --release -p cohortsv --example cohort_clustering
//! ```

use cohortsv::cohort::{cost_curve, kmeans_gmm_with, weighted_kl, KmeansOptions};
use cohortsv::gmm::{em_train, map_adapt, SpeakerModel, DEFAULT_RELEVANCE};
use cohortsv::synth::{generate_corpus, SynthConfig};

fn main() -> cohortsv::Result<()> {
    let corpus = generate_corpus(&SynthConfig {
        n_speakers: 24,
        tests_per_speaker: 1,
        ..SynthConfig::default()
    })?;
    let ubm = em_train(&corpus.ubm_train, 16, 10, 1)?;
    let models: Vec<SpeakerModel> = corpus
        .enrollments
        .iter()
        .map(|(_, feats)| map_adapt(&ubm, feats, DEFAULT_RELEVANCE))
        .collect::<Result<_, _>>()?;

    println!("D(spk000, spk001) = {:.4}", weighted_kl(&models[0].gmm, &models[1].gmm)?);

    let opts = KmeansOptions::default();
    let (cohort, assignment) = kmeans_gmm_with(&models, 6, 11, &opts)?;
    println!("cohort of {} centroids, J = {:.4}", cohort.size(), assignment.cost);
    for c in 0..cohort.size() {
        let members: Vec<&str> = assignment
            .labels
            .iter()
            .zip(&corpus.enrollments)
            .filter(|(l, _)| **l == c)
            .map(|(_, (id, _))| id.as_str())
            .collect();
        println!("  cluster {c}: {}", members.join(" "));
    }

    println!("k,cost");
    for (k, j) in cost_curve(&models, 12, 11, &opts)? {
        println!("{k},{j:.5}");
    }
    Ok(())
}
