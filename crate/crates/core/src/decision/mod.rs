//! Discriminative decision makers over assembled score features.

mod mlp;
mod svm;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::Label;

pub use mlp::{train_mlp, train_mlp_with, DenseLayer, MlpConfig, MlpModel, HIDDEN_WIDTH_FACTOR};
pub use svm::{train_svm, train_svm_with, LinearSvmModel, SvmConfig, SvmTrace};

/// Feature rows with genuine/imposter labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    rows: Vec<Vec<f64>>,
    labels: Vec<Label>,
}

impl LabeledSet {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(invalid(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("feature rows differ in dimension"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite feature value"));
        }
        Ok(Self { rows, labels })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// Both classes present and at least two rows.
    pub(crate) fn check_trainable(&self) -> Result<()> {
        let genuine = self.labels.iter().filter(|l| l.is_genuine()).count();
        if self.len() < 2 || self.dim() == 0 || genuine == 0 || genuine == self.len() {
            return Err(invalid(
                "training needs at least one genuine and one imposter row",
            ));
        }
        Ok(())
    }
}

/// Per-dimension z-scoring fit on training rows and stored with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|d| rows.iter().map(|r| r[d]).sum::<f64>() / n)
            .collect();
        let scale = (0..dim)
            .map(|d| {
                let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.mean.len() != self.scale.len() {
            return Err(invalid("standardizer mean/scale lengths differ"));
        }
        if self.scale.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(invalid("standardizer scales must be finite and positive"));
        }
        Ok(())
    }
}

/// Either trained decision maker.
#[derive(Debug, Clone, PartialEq)]
pub enum DecisionModel {
    Svm(LinearSvmModel),
    Mlp(MlpModel),
}

impl DecisionModel {
    /// Higher means more likely genuine.
    pub fn predict_score(&self, feature: &[f64]) -> Result<f64> {
        match self {
            DecisionModel::Svm(m) => m.predict_score(feature),
            DecisionModel::Mlp(m) => m.predict_score(feature),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            DecisionModel::Svm(m) => m.weights.len(),
            DecisionModel::Mlp(m) => m.input_dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            DecisionModel::Svm(_) => "svm",
            DecisionModel::Mlp(_) => "mlp",
        }
    }
}

/// Fraction of rows whose score sign matches the label (score > 0 = genuine).
pub fn accuracy(model: &DecisionModel, data: &LabeledSet) -> Result<f64> {
    let mut correct = 0usize;
    for (x, l) in data.rows().iter().zip(data.labels()) {
        if (model.predict_score(x)? > 0.0) == l.is_genuine() {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(invalid(format!(
            "feature has dimension {got}, model expects {expected}"
        )));
    }
    Ok(())
}
