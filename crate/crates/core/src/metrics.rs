//! Trials and verification metrics: EER, DET operating points, histograms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Imposter,
}

impl Label {
    pub fn is_genuine(self) -> bool {
        self == Label::Genuine
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Imposter => "imposter",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "imposter" => Ok(Label::Imposter),
            other => Err(invalid(format!("unknown trial label {other:?}"))),
        }
    }
}

/// One verification attempt: a test utterance against a claimed identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialRecord {
    pub utterance_id: String,
    pub claimed_speaker: String,
    pub label: Label,
}

impl TrialRecord {
    pub fn new(utterance_id: &str, claimed_speaker: &str, label: Label) -> Result<Self> {
        if utterance_id.is_empty() || claimed_speaker.is_empty() {
            return Err(invalid("trial ids must be nonempty"));
        }
        Ok(Self {
            utterance_id: utterance_id.to_string(),
            claimed_speaker: claimed_speaker.to_string(),
            label,
        })
    }
}

/// Operating point at threshold `threshold`: accept when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    /// `f64::INFINITY` for the reject-everything point.
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub eer: f64,
    pub eer_threshold: f64,
    /// (far, frr) per threshold, thresholds ascending.
    pub det_points: Vec<(f64, f64)>,
    pub n_target: usize,
    pub n_nontarget: usize,
}

fn check_inputs(scores: &[f64], labels: &[Label]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("NaN score"));
    }
    let n_target = labels.iter().filter(|l| l.is_genuine()).count();
    let n_nontarget = labels.len() - n_target;
    if n_target == 0 || n_nontarget == 0 {
        return Err(invalid(
            "need at least one genuine and one imposter trial",
        ));
    }
    Ok((n_target, n_nontarget))
}

/// One point per distinct score, ascending, then the reject-all point.
pub fn det_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<DetPoint>> {
    let (n_target, n_nontarget) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut points = Vec::new();
    // Counts of trials strictly below the current threshold.
    let mut genuine_below = 0usize;
    let mut imposter_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        points.push(DetPoint {
            threshold,
            far: (n_nontarget - imposter_below) as f64 / n_nontarget as f64,
            frr: genuine_below as f64 / n_target as f64,
        });
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]].is_genuine() {
                genuine_below += 1;
            } else {
                imposter_below += 1;
            }
            i += 1;
        }
    }
    points.push(DetPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate from an operating-point sweep, linearly interpolated
/// between the two points where `far - frr` changes sign.
pub fn eer_from_points(points: &[DetPoint]) -> (f64, f64) {
    let diff = |p: &DetPoint| p.far - p.frr;
    let j = points
        .iter()
        .position(|p| diff(p) <= 0.0)
        .expect("sweep ends at far=0, frr=1");
    if j == 0 || diff(&points[j]) == 0.0 {
        return (points[j].far, points[j].threshold);
    }
    let (a, b) = (&points[j - 1], &points[j]);
    let t = diff(a) / (diff(a) - diff(b));
    let eer = a.far + t * (b.far - a.far);
    let threshold = if b.threshold.is_finite() {
        a.threshold + t * (b.threshold - a.threshold)
    } else {
        a.threshold
    };
    (eer, threshold)
}

pub fn compute_eer(scores: &[f64], labels: &[Label]) -> Result<EvalReport> {
    let (n_target, n_nontarget) = check_inputs(scores, labels)?;
    let points = det_curve(scores, labels)?;
    let (eer, eer_threshold) = eer_from_points(&points);
    Ok(EvalReport {
        eer,
        eer_threshold,
        det_points: points.iter().map(|p| (p.far, p.frr)).collect(),
        n_target,
        n_nontarget,
    })
}

/// Counts of 1-based rank positions; bin `r - 1` holds rank `r`.
pub fn rank_histogram(positions: &[usize], max_rank: usize) -> Result<Vec<usize>> {
    let mut bins = vec![0usize; max_rank];
    for &p in positions {
        if p == 0 || p > max_rank {
            return Err(invalid(format!("rank position {p} outside 1..={max_rank}")));
        }
        bins[p - 1] += 1;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(genuine: &[f64], imposter: &[f64]) -> (Vec<f64>, Vec<Label>) {
        let mut s = genuine.to_vec();
        s.extend_from_slice(imposter);
        let mut l = vec![Label::Genuine; genuine.len()];
        l.extend(vec![Label::Imposter; imposter.len()]);
        (s, l)
    }

    #[test]
    fn perfect_separation() {
        let (s, l) = split(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(compute_eer(&s, &l).unwrap().eer, 0.0);
    }

    #[test]
    fn hand_case_half() {
        let (s, l) = split(&[0.9, 0.8], &[0.95, 0.1]);
        let r = compute_eer(&s, &l).unwrap();
        assert_eq!(r.eer, 0.5);
        assert_eq!((r.n_target, r.n_nontarget), (2, 2));
    }

    #[test]
    fn det_endpoints() {
        let (s, l) = split(&[0.9, 0.3], &[0.5, 0.1]);
        let pts = det_curve(&s, &l).unwrap();
        assert_eq!((pts[0].far, pts[0].frr), (1.0, 0.0));
        let last = pts.last().unwrap();
        assert_eq!((last.far, last.frr), (0.0, 1.0));
        assert_eq!(pts.len(), 5);
    }

    #[test]
    fn ties_accept_at_threshold() {
        let (s, l) = split(&[1.0], &[1.0]);
        let pts = det_curve(&s, &l).unwrap();
        assert_eq!((pts[0].far, pts[0].frr), (1.0, 0.0));
        assert_eq!(pts.len(), 2);
        assert_eq!(compute_eer(&s, &l).unwrap().eer, 0.5);
    }

    #[test]
    fn single_class_rejected() {
        assert!(compute_eer(&[1.0, 2.0], &[Label::Genuine; 2]).is_err());
        assert!(compute_eer(&[1.0], &[Label::Genuine, Label::Imposter]).is_err());
    }

    #[test]
    fn histogram_cases() {
        assert_eq!(rank_histogram(&[1, 1, 2], 3).unwrap(), vec![2, 1, 0]);
        assert_eq!(rank_histogram(&[], 4).unwrap(), vec![0; 4]);
        assert!(rank_histogram(&[0], 3).is_err());
        assert!(rank_histogram(&[4], 3).is_err());
    }

    #[test]
    fn label_tokens() {
        assert_eq!("genuine".parse::<Label>().unwrap(), Label::Genuine);
        assert!("target".parse::<Label>().is_err());
        assert!(TrialRecord::new("", "a", Label::Genuine).is_err());
    }

    fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
        (1usize..40, 1usize..40).prop_flat_map(|(g, i)| {
            (
                prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) * 0.25), g + i),
                Just(g),
            )
                .prop_map(|(s, g)| {
                    let l = (0..s.len())
                        .map(|k| if k < g { Label::Genuine } else { Label::Imposter })
                        .collect();
                    (s, l)
                })
        })
    }

    proptest! {
        #[test]
        fn det_is_monotone((s, l) in scored_set()) {
            let pts = det_curve(&s, &l).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[1].far <= w[0].far);
                prop_assert!(w[1].frr >= w[0].frr);
            }
        }

        #[test]
        fn eer_invariant_under_monotone_map((s, l) in scored_set()) {
            let a = compute_eer(&s, &l).unwrap().eer;
            let mapped: Vec<f64> = s.iter().map(|x| (x * 0.7).exp() - 3.0).collect();
            prop_assert_eq!(a, compute_eer(&mapped, &l).unwrap().eer);
        }

        #[test]
        fn eer_symmetric_under_negation((s, l) in scored_set()) {
            let a = compute_eer(&s, &l).unwrap().eer;
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            let swapped: Vec<Label> = l
                .iter()
                .map(|x| if x.is_genuine() { Label::Imposter } else { Label::Genuine })
                .collect();
            let b = compute_eer(&neg, &swapped).unwrap().eer;
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}
