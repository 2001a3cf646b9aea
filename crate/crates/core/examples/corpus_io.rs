//! Generate a small synthetic corpus and write it in the on-disk formats:
//! binary and CSV feature matrices, a trial list, and a GMM as JSON.
//!
//! ```bash
//! cargo run -p cohortsv --example corpus_io -- /tmp/cohortsv-corpus
//! ```

use std::path::PathBuf;

use cohortsv::gmm::em_train;
use cohortsv::io::{gmm_to_json, read_features, trials_to_csv, write_bytes, write_features};
use cohortsv::synth::{generate_corpus, SynthConfig};

fn main() -> cohortsv::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("cohortsv-corpus"));
    let cfg = SynthConfig {
        n_speakers: 5,
        tests_per_speaker: 2,
        background_speakers: 4,
        frames_per_background_speaker: 500,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg)?;

    let bin = dir.join("ubm_train.cvf");
    write_features(&bin, &corpus.ubm_train)?;
    let (spk, enroll) = &corpus.enrollments[0];
    let csv = dir.join(format!("{spk}.csv"));
    write_features(&csv, enroll)?;
    write_bytes(&dir.join("trials.csv"), trials_to_csv(&corpus.trials)?.as_bytes())?;
    let ubm = em_train(&corpus.ubm_train, 8, 5, 0)?;
    write_bytes(&dir.join("ubm.json"), gmm_to_json(&ubm).as_bytes())?;

    assert_eq!(read_features(&bin)?, corpus.ubm_train);
    assert_eq!(read_features(&csv)?, *enroll);
    println!(
        "wrote {} ({} UBM frames, {} trials, UBM fingerprint {})",
        dir.display(),
        corpus.ubm_train.frames(),
        corpus.trials.len(),
        &ubm.fingerprint()[..12]
    );
    Ok(())
}
