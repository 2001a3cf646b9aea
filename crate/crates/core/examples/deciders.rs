//! Train the linear SVM and the MLP decider on a separable set and on XOR,
//! and save/load one of them through the JSON model format.
//!
//! ```bash
//! cargo run --release -p cohortsv --example deciders
//! ```

use cohortsv::decision::{accuracy, train_mlp, train_svm, DecisionModel, LabeledSet};
use cohortsv::io::{decider_from_json, decider_to_json};
use cohortsv::metrics::Label;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n: usize, seed: u64) -> cohortsv::Result<LabeledSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let (c, label) = if i % 2 == 0 { (2.0, Label::Genuine) } else { (-2.0, Label::Imposter) };
        rows.push(vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)]);
        labels.push(label);
    }
    LabeledSet::new(rows, labels)
}

fn xor() -> cohortsv::Result<LabeledSet> {
    let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
    LabeledSet::new(rows, vec![Label::Imposter, Label::Imposter, Label::Genuine, Label::Genuine])
}

fn main() -> cohortsv::Result<()> {
    let blobs = blobs(200, 3)?;
    let xor = xor()?;

    for (name, data) in [("blobs", &blobs), ("xor", &xor)] {
        let svm = DecisionModel::Svm(train_svm(data, 1e-2, 200, 5)?);
        let mlp = DecisionModel::Mlp(train_mlp(data, 5000, 0.05, 5)?);
        println!(
            "{name:6} svm accuracy {:.2}   mlp accuracy {:.2}",
            accuracy(&svm, data)?,
            accuracy(&mlp, data)?
        );
    }

    let model = DecisionModel::Mlp(train_mlp(&xor, 5000, 0.05, 5)?);
    let json = decider_to_json(&model);
    let back = decider_from_json(&json, "in-memory")?;
    let x = [1.0, 0.0];
    println!(
        "saved {} bytes of JSON; score at {x:?} before {:+.6} after {:+.6}",
        json.len(),
        model.predict_score(&x)?,
        back.predict_score(&x)?
    );
    Ok(())
}
