//! Train a UBM with EM on pooled background frames, MAP-adapt one speaker
//! model, and score a genuine and an imposter utterance with the LLR.
//!
//! ```bash
//! cargo run --release -p cohortsv --example gmm_ubm_map
//! ```

use cohortsv::gmm::{em_fit, llr, map_adapt, EmOptions, DEFAULT_RELEVANCE};
use cohortsv::synth::{generate_corpus, SynthConfig};

fn main() -> cohortsv::Result<()> {
    let corpus = generate_corpus(&SynthConfig {
        n_speakers: 4,
        background_speakers: 8,
        ..SynthConfig::default()
    })?;

    let fit = em_fit(&corpus.ubm_train, 16, 7, &EmOptions::default())?;
    println!("UBM: {} components over {} frames", fit.gmm.components(), corpus.ubm_train.frames());
    let frames = corpus.ubm_train.frames() as f64;
    for (i, ll) in fit.log_likelihoods.iter().enumerate() {
        println!("  iter {i:2}  avg log-likelihood {:.5}", ll / frames);
    }

    let (spk, enroll) = &corpus.enrollments[0];
    let model = map_adapt(&fit.gmm, enroll, DEFAULT_RELEVANCE)?;
    let shift: f64 = model
        .gmm
        .means_flat()
        .iter()
        .zip(fit.gmm.means_flat())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("{spk}: adapted from {} enrollment frames, largest mean shift {shift:.4}", enroll.frames());

    for utt in corpus.tests.iter().filter(|t| t.id.ends_with("_t0")) {
        let tag = if utt.speaker == *spk { "genuine " } else { "imposter" };
        println!("  {tag} {}  LLR {:+.4}", utt.id, llr(&model, &fit.gmm, &utt.features)?);
    }
    Ok(())
}
