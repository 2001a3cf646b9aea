//! Seeded synthetic corpora standing in for real enrollment/test recordings.
//!
//! A ground-truth base mixture plays the role of the acoustic space. Every
//! speaker (enrolled or background) is the base mixture with its component
//! means perturbed, and every utterance is drawn from its speaker's mixture.
//! Test utterances additionally carry a per-utterance offset on all frames,
//! a crude stand-in for channel and session variability.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gmm::{DiagGmm, FeatureMatrix};
use crate::metrics::{Label, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub dim: usize,
    /// Components of the ground-truth base mixture.
    pub ubm_components: usize,
    pub frames_per_enroll: usize,
    pub frames_per_test: usize,
    pub tests_per_speaker: usize,
    /// Std-dev of each speaker's per-coordinate mean shift, in units of the
    /// component's standard deviation.
    pub speaker_shift_scale: f64,
    /// Std-dev of the per-utterance offset on test frames, in units of the
    /// average component standard deviation. Zero disables it.
    pub session_shift_scale: f64,
    /// Speakers in the separate UBM-training pool.
    pub background_speakers: usize,
    pub frames_per_background_speaker: usize,
    /// Set from the experiment seed, never read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 60,
            dim: 8,
            ubm_components: 32,
            frames_per_enroll: 500,
            frames_per_test: 200,
            tests_per_speaker: 10,
            speaker_shift_scale: 0.25,
            session_shift_scale: 0.3,
            background_speakers: 20,
            frames_per_background_speaker: 2000,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_speakers", self.n_speakers),
            ("dim", self.dim),
            ("ubm_components", self.ubm_components),
            ("frames_per_enroll", self.frames_per_enroll),
            ("frames_per_test", self.frames_per_test),
            ("tests_per_speaker", self.tests_per_speaker),
            ("background_speakers", self.background_speakers),
            ("frames_per_background_speaker", self.frames_per_background_speaker),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(invalid(format!("synth.{name} must be at least 1")));
        }
        if !(self.speaker_shift_scale > 0.0 && self.speaker_shift_scale.is_finite()) {
            return Err(invalid("synth.speaker_shift_scale must be positive"));
        }
        if !(self.session_shift_scale >= 0.0 && self.session_shift_scale.is_finite()) {
            return Err(invalid("synth.session_shift_scale must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestUtterance {
    pub id: String,
    pub speaker: String,
    pub features: FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub ubm_train: FeatureMatrix,
    /// (speaker id, enrollment features), speaker order.
    pub enrollments: Vec<(String, FeatureMatrix)>,
    pub tests: Vec<TestUtterance>,
    /// Every test against every enrolled speaker.
    pub trials: Vec<TrialRecord>,
}

pub fn speaker_id(i: usize) -> String {
    format!("spk{i:03}")
}

fn base_mixture(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<DiagGmm> {
    let raw: Vec<f64> = (0..cfg.ubm_components).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..cfg.ubm_components)
        .map(|_| (0..cfg.dim).map(|_| 3.0 * normal(rng)).collect())
        .collect();
    let variances = (0..cfg.ubm_components)
        .map(|_| (0..cfg.dim).map(|_| rng.random_range(0.5..2.0)).collect())
        .collect();
    DiagGmm::new(weights, means, variances)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn perturbed(base: &DiagGmm, scale: f64, rng: &mut ChaCha8Rng) -> Result<DiagGmm> {
    let means = base
        .means_flat()
        .iter()
        .zip(base.variances_flat())
        .map(|(m, v)| m + scale * v.sqrt() * normal(rng))
        .collect();
    base.with_means(means)
}

fn sample(gmm: &DiagGmm, frames: usize, offset: &[f64], rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
    let pick = WeightedIndex::new(gmm.weights()).map_err(|e| invalid(e.to_string()))?;
    let mut values = Vec::with_capacity(frames * gmm.dim());
    for _ in 0..frames {
        let i = pick.sample(rng);
        for d in 0..gmm.dim() {
            let x = gmm.mean(i)[d] + gmm.variance(i)[d].sqrt() * normal(rng) + offset[d];
            values.push(x as f32);
        }
    }
    FeatureMatrix::new(frames, gmm.dim(), values)
}

/// Generates a full corpus; a pure function of `cfg`.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = base_mixture(cfg, &mut rng)?;
    let no_offset = vec![0.0; cfg.dim];
    let session_sd = cfg.session_shift_scale
        * (base.variances_flat().iter().map(|v| v.sqrt()).sum::<f64>()
            / base.variances_flat().len() as f64);

    let mut background = Vec::with_capacity(cfg.background_speakers);
    for _ in 0..cfg.background_speakers {
        let spk = perturbed(&base, cfg.speaker_shift_scale, &mut rng)?;
        background.push(sample(&spk, cfg.frames_per_background_speaker, &no_offset, &mut rng)?);
    }
    let ubm_train = FeatureMatrix::concat(&background)?;

    let mut enrollments = Vec::with_capacity(cfg.n_speakers);
    let mut tests = Vec::with_capacity(cfg.n_speakers * cfg.tests_per_speaker);
    for s in 0..cfg.n_speakers {
        let id = speaker_id(s);
        let spk = perturbed(&base, cfg.speaker_shift_scale, &mut rng)?;
        enrollments.push((id.clone(), sample(&spk, cfg.frames_per_enroll, &no_offset, &mut rng)?));
        for t in 0..cfg.tests_per_speaker {
            let offset: Vec<f64> = (0..cfg.dim).map(|_| session_sd * normal(&mut rng)).collect();
            tests.push(TestUtterance {
                id: format!("{id}_t{t}"),
                speaker: id.clone(),
                features: sample(&spk, cfg.frames_per_test, &offset, &mut rng)?,
            });
        }
    }

    let mut trials = Vec::with_capacity(tests.len() * cfg.n_speakers);
    for t in &tests {
        for (spk, _) in &enrollments {
            let label = if *spk == t.speaker {
                Label::Genuine
            } else {
                Label::Imposter
            };
            trials.push(TrialRecord::new(&t.id, spk, label)?);
        }
    }
    Ok(Corpus {
        ubm_train,
        enrollments,
        tests,
        trials,
    })
}
