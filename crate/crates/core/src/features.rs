//! Per-trial score vectors and the features derived from them.
//!
//! A trial's score vector holds the frame-averaged log-likelihood of the test
//! utterance under the claimed speaker model, the UBM and each cohort model.
//! Three features come out of it: the claimed score z-normalized by the
//! cohort scores, the rank of the claimed score among the cohort scores, and
//! the sorted vector of cohort-minus-claimed score differences. Conditions
//! C1..C7 select which of them accompany the baseline LLR.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::cohort::Cohort;
use crate::error::{invalid, Error, Result};
use crate::gmm::{avg_loglik, DiagGmm, FeatureMatrix, SpeakerModel};
use crate::metrics::{Label, TrialRecord};

/// Lower bound on the cohort standard deviation in the normalized score.
pub const NORM_SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub claimed: f64,
    pub ubm: f64,
    pub cohort: Vec<f64>,
}

impl ScoreVector {
    pub fn new(claimed: f64, ubm: f64, cohort: Vec<f64>) -> Result<Self> {
        if cohort.is_empty() {
            return Err(invalid("score vector needs at least one cohort score"));
        }
        if !claimed.is_finite() || !ubm.is_finite() || cohort.iter().any(|s| !s.is_finite()) {
            return Err(invalid("score vector entries must be finite"));
        }
        Ok(Self {
            claimed,
            ubm,
            cohort,
        })
    }

    pub fn cohort_size(&self) -> usize {
        self.cohort.len()
    }

    /// Baseline statistic: claimed minus UBM.
    pub fn llr(&self) -> f64 {
        self.claimed - self.ubm
    }

    /// Same trial with the UBM score subtracted from every entry.
    pub fn relative_to_ubm(&self) -> ScoreVector {
        ScoreVector {
            claimed: self.claimed - self.ubm,
            ubm: 0.0,
            cohort: self.cohort.iter().map(|s| s - self.ubm).collect(),
        }
    }
}

/// Whether cohort-derived features see raw log-likelihoods or LLRs against
/// the UBM. Every feature here is shift-invariant, so both give the same
/// numbers up to rounding; the switch exists for experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CohortScoring {
    #[default]
    Raw,
    UbmRelative,
}

impl FromStr for CohortScoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Self::Raw),
            "ubm-relative" => Ok(Self::UbmRelative),
            other => Err(invalid(format!("unknown cohort scoring {other:?}"))),
        }
    }
}

/// UBM and cohort scores of one utterance. They do not depend on the claim,
/// so callers scoring many claims per utterance compute them once.
pub fn background_scores(
    utterance: &FeatureMatrix,
    ubm: &DiagGmm,
    cohort: &Cohort,
) -> Result<(f64, Vec<f64>)> {
    let s_ubm = avg_loglik(ubm, utterance)?;
    let s_cohort = cohort
        .centroids
        .iter()
        .map(|c| avg_loglik(c, utterance))
        .collect::<Result<_>>()?;
    Ok((s_ubm, s_cohort))
}

pub fn score_vector(
    utterance: &FeatureMatrix,
    claimed: &SpeakerModel,
    ubm: &DiagGmm,
    cohort: &Cohort,
) -> Result<ScoreVector> {
    let (s_ubm, s_cohort) = background_scores(utterance, ubm, cohort)?;
    ScoreVector::new(avg_loglik(&claimed.gmm, utterance)?, s_ubm, s_cohort)
}

/// `(claimed - mean(cohort)) / std(cohort)` with the population standard
/// deviation, floored at [`NORM_SIGMA_FLOOR`].
pub fn feat_norm(sv: &ScoreVector) -> Result<f64> {
    let k = sv.cohort.len();
    if k < 2 {
        return Err(invalid(format!(
            "normalized score needs at least 2 cohort scores, got {k}"
        )));
    }
    let mean = sv.cohort.iter().sum::<f64>() / k as f64;
    let var = sv.cohort.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / k as f64;
    Ok((sv.claimed - mean) / var.sqrt().max(NORM_SIGMA_FLOOR))
}

/// 1-based rank of the claimed score among itself and the cohort scores,
/// highest first. Ties go to the claimed score; the UBM score takes no part.
pub fn feat_rank_position(sv: &ScoreVector) -> usize {
    1 + sv.cohort.iter().filter(|&&s| s > sv.claimed).count()
}

/// Cohort score minus claimed score for every cohort model, ascending.
pub fn feat_rank_diff(sv: &ScoreVector) -> Vec<f64> {
    let mut d: Vec<f64> = sv.cohort.iter().map(|s| s - sv.claimed).collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Feature combinations; the raw LLR is always included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::C1,
        Condition::C2,
        Condition::C3,
        Condition::C4,
        Condition::C5,
        Condition::C6,
        Condition::C7,
    ];

    /// (norm, rank position, rank of differences)
    pub fn selection(self) -> (bool, bool, bool) {
        match self {
            Condition::C1 => (true, false, false),
            Condition::C2 => (false, true, false),
            Condition::C3 => (false, false, true),
            Condition::C4 => (true, true, false),
            Condition::C5 => (true, false, true),
            Condition::C6 => (false, true, true),
            Condition::C7 => (true, true, true),
        }
    }

    pub fn dimension(self, cohort_size: usize) -> usize {
        let (norm, pos, diff) = self.selection();
        1 + usize::from(norm) + usize::from(pos) + if diff { cohort_size } else { 0 }
    }

    /// Column names in assembly order.
    pub fn column_names(self, cohort_size: usize) -> Vec<String> {
        let (norm, pos, diff) = self.selection();
        let mut names = vec!["llr".to_string()];
        if norm {
            names.push("norm".into());
        }
        if pos {
            names.push("rank_pos".into());
        }
        if diff {
            names.extend((0..cohort_size).map(|k| format!("rank_diff_{k}")));
        }
        names
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", *self as u8 + 1)
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| invalid(format!("unknown condition {s:?}, expected C1..C7")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFeature {
    pub condition: Condition,
    pub values: Vec<f64>,
}

/// Concatenates `[llr, norm?, rank_pos?, rank_diff?]` for `condition`.
pub fn assemble(sv: &ScoreVector, condition: Condition) -> Result<AssembledFeature> {
    assemble_with(sv, condition, CohortScoring::Raw)
}

pub fn assemble_with(
    sv: &ScoreVector,
    condition: Condition,
    scoring: CohortScoring,
) -> Result<AssembledFeature> {
    let (norm, pos, diff) = condition.selection();
    let view = match scoring {
        CohortScoring::Raw => sv.clone(),
        CohortScoring::UbmRelative => sv.relative_to_ubm(),
    };
    let mut values = Vec::with_capacity(condition.dimension(sv.cohort_size()));
    values.push(sv.llr());
    if norm {
        values.push(feat_norm(&view)?);
    }
    if pos {
        values.push(feat_rank_position(&view) as f64);
    }
    if diff {
        values.extend(feat_rank_diff(&view));
    }
    Ok(AssembledFeature { condition, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTrial {
    pub trial: TrialRecord,
    pub feature: AssembledFeature,
    pub s_claimed: f64,
}

/// Per test utterance, which trials survive the training-balance filter:
/// every genuine trial, plus the two imposter trials with the highest
/// claimed-model score. Ties keep the earlier trial.
pub fn imbalance_mask(trials: &[(&TrialRecord, f64)]) -> Vec<bool> {
    let mut by_utt: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, (t, _)) in trials.iter().enumerate() {
        if t.label == Label::Imposter {
            by_utt.entry(t.utterance_id.as_str()).or_default().push(i);
        }
    }
    let mut keep: Vec<bool> = trials.iter().map(|(t, _)| t.label == Label::Genuine).collect();
    for idx in by_utt.values_mut() {
        idx.sort_by(|&a, &b| trials[b].1.total_cmp(&trials[a].1).then(a.cmp(&b)));
        for &i in idx.iter().take(2) {
            keep[i] = true;
        }
    }
    keep
}

pub fn imbalance_filter(trials: Vec<ScoredTrial>) -> Vec<ScoredTrial> {
    let mask = imbalance_mask(
        &trials
            .iter()
            .map(|t| (&t.trial, t.s_claimed))
            .collect::<Vec<_>>(),
    );
    trials
        .into_iter()
        .zip(mask)
        .filter_map(|(t, k)| k.then_some(t))
        .collect()
}
