use std::fmt;
use std::path::{Path, PathBuf};

use crate::features::Condition;

use super::DeciderKind;

/// Development or evaluation speakers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Set {
    Dev,
    Eval,
}

impl Set {
    pub const BOTH: [Set; 2] = [Set::Dev, Set::Eval];
}

impl fmt::Display for Set {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Set::Dev => "dev",
            Set::Eval => "eval",
        })
    }
}

/// File locations inside a work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ubm_train(&self) -> PathBuf {
        self.root.join("corpus/ubm_train.cvf")
    }

    pub fn enroll(&self, speaker: &str) -> PathBuf {
        self.root.join(format!("corpus/enroll/{speaker}.cvf"))
    }

    pub fn test(&self, utterance: &str) -> PathBuf {
        self.root.join(format!("corpus/test/{utterance}.cvf"))
    }

    /// `utterance_id,speaker`
    pub fn tests(&self) -> PathBuf {
        self.root.join("corpus/tests.csv")
    }

    pub fn trials(&self) -> PathBuf {
        self.root.join("corpus/trials.csv")
    }

    /// `speaker,set`
    pub fn split(&self) -> PathBuf {
        self.root.join("corpus/split.csv")
    }

    pub fn ubm(&self) -> PathBuf {
        self.root.join("models/ubm.json")
    }

    pub fn speakers(&self) -> PathBuf {
        self.root.join("models/speakers.json")
    }

    pub fn cohort(&self) -> PathBuf {
        self.root.join("models/cohort.json")
    }

    pub fn decider(&self, kind: DeciderKind, c: Condition) -> PathBuf {
        self.root.join(format!("models/decider_{kind}_{c}.json"))
    }

    pub fn scores(&self, set: Set) -> PathBuf {
        self.root.join(format!("scores/{set}.csv"))
    }

    pub fn features(&self, set: Set, c: Condition) -> PathBuf {
        self.root.join(format!("features/{set}_{c}.csv"))
    }

    /// Sorted score-difference vectors per trial, for external embedding tools.
    pub fn rank_diff(&self, set: Set) -> PathBuf {
        self.root.join(format!("features/rank_diff_{set}.csv"))
    }

    pub fn em_trace(&self) -> PathBuf {
        self.root.join("reports/em_trace.csv")
    }

    pub fn cost_curve(&self) -> PathBuf {
        self.root.join("reports/cost_curve.csv")
    }

    pub fn rank_histogram(&self, set: Set) -> PathBuf {
        self.root.join(format!("reports/rank_histogram_{set}.csv"))
    }

    pub fn report(&self, kind: DeciderKind, c: Condition) -> PathBuf {
        self.root.join(format!("reports/eval_{kind}_{c}.json"))
    }

    pub fn det(&self, kind: DeciderKind, c: Condition) -> PathBuf {
        self.root.join(format!("reports/det_{kind}_{c}.csv"))
    }

    pub fn baseline_report(&self) -> PathBuf {
        self.root.join("reports/eval_baseline.json")
    }

    pub fn baseline_det(&self) -> PathBuf {
        self.root.join("reports/det_baseline.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.sha256")
    }
}
