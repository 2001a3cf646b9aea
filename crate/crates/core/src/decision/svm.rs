//! Linear SVM trained by dual coordinate descent.
//!
//! Objective over standardized inputs `z` with the bias folded in as a
//! constant feature:
//!
//! ```text
//! lambda/2 * (|w|^2 + b^2) + 1/n * sum_i max(0, 1 - y_i (w.z_i + b))
//! ```
//!
//! Coordinates are visited in a fresh seeded permutation every epoch. The
//! dual solution converges to the unique primal minimizer, so models do not
//! depend on row order or on duplicated rows beyond solver tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, LabeledSet, Standardizer};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub regularization: f64,
    pub epochs: usize,
    /// Stop when the projected-gradient spread of an epoch falls below this.
    pub tolerance: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            regularization: 1e-2,
            epochs: 200,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub seed: u64,
    pub standardizer: Standardizer,
}

/// Per-epoch primal objective of the model kept so far (never increases).
#[derive(Debug, Clone)]
pub struct SvmTrace {
    pub objective: Vec<f64>,
    pub epochs_run: usize,
}

impl LinearSvmModel {
    /// Signed margin `w.z + b` on the standardized input.
    pub fn predict_score(&self, feature: &[f64]) -> Result<f64> {
        check_dim(self.weights.len(), feature.len())?;
        let z = self.standardizer.apply(feature);
        Ok(dot(&self.weights, &z) + self.bias)
    }

    pub fn validate(&self) -> Result<()> {
        self.standardizer.validate()?;
        if self.standardizer.dim() != self.weights.len() {
            return Err(invalid("SVM weights and standardizer differ in dimension"));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.bias.is_finite() {
            return Err(invalid("non-finite SVM parameter"));
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn primal_objective(w: &[f64], z: &[Vec<f64>], y: &[f64], lambda: f64) -> f64 {
    // w carries the bias in its last slot; z rows carry the constant 1.
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(x, yi)| (1.0 - yi * dot(w, x)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / z.len() as f64
}

pub fn train_svm(data: &LabeledSet, regularization: f64, epochs: usize, seed: u64) -> Result<LinearSvmModel> {
    let cfg = SvmConfig {
        regularization,
        epochs,
        ..SvmConfig::default()
    };
    train_svm_with(data, &cfg, seed).map(|(m, _)| m)
}

pub fn train_svm_with(data: &LabeledSet, cfg: &SvmConfig, seed: u64) -> Result<(LinearSvmModel, SvmTrace)> {
    data.check_trainable()?;
    if !(cfg.regularization > 0.0 && cfg.regularization.is_finite()) {
        return Err(invalid("SVM regularization must be positive"));
    }
    if cfg.epochs == 0 {
        return Err(invalid("SVM needs at least one epoch"));
    }
    let n = data.len();
    let standardizer = Standardizer::fit(data.rows());
    let z: Vec<Vec<f64>> = data
        .rows()
        .iter()
        .map(|r| {
            let mut v = standardizer.apply(r);
            v.push(1.0);
            v
        })
        .collect();
    let y: Vec<f64> = data
        .labels()
        .iter()
        .map(|l| if l.is_genuine() { 1.0 } else { -1.0 })
        .collect();
    let c = 1.0 / (cfg.regularization * n as f64);
    let q: Vec<f64> = z.iter().map(|x| dot(x, x)).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; z[0].len()];
    let mut best_w = w.clone();
    let mut best_obj = primal_objective(&w, &z, &y, cfg.regularization);
    let mut objective = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut epochs_run = 0;
    for _ in 0..cfg.epochs {
        epochs_run += 1;
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = y[i] * dot(&w, &z[i]) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y[i];
                for (wj, xj) in w.iter_mut().zip(&z[i]) {
                    *wj += step * xj;
                }
            }
        }
        let obj = primal_objective(&w, &z, &y, cfg.regularization);
        if obj <= best_obj {
            best_obj = obj;
            best_w.clone_from(&w);
        }
        objective.push(best_obj);
        if pg_max - pg_min < cfg.tolerance {
            break;
        }
    }
    let bias = best_w.pop().unwrap();
    let model = LinearSvmModel {
        weights: best_w,
        bias,
        regularization: cfg.regularization,
        epochs: cfg.epochs,
        seed,
        standardizer,
    };
    Ok((model, SvmTrace { objective, epochs_run }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{accuracy, DecisionModel};
    use crate::metrics::Label;

    fn blobs() -> LabeledSet {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = f64::from(i) * 0.05;
            rows.push(vec![2.0 + t, 2.0 - t]);
            labels.push(Label::Genuine);
            rows.push(vec![-2.0 - t, -2.0 + 0.5 * t]);
            labels.push(Label::Imposter);
        }
        LabeledSet::new(rows, labels).unwrap()
    }

    fn xor() -> LabeledSet {
        LabeledSet::new(
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![Label::Imposter, Label::Imposter, Label::Genuine, Label::Genuine],
        )
        .unwrap()
    }

    #[test]
    fn separates_blobs() {
        let m = train_svm(&blobs(), 1e-2, 200, 1).unwrap();
        assert_eq!(accuracy(&DecisionModel::Svm(m), &blobs()).unwrap(), 1.0);
    }

    #[test]
    fn cannot_fit_xor() {
        let m = train_svm(&xor(), 1e-2, 200, 1).unwrap();
        assert!(accuracy(&DecisionModel::Svm(m), &xor()).unwrap() <= 0.75);
    }

    #[test]
    fn objective_trace_non_increasing() {
        let (_, trace) = train_svm_with(&xor(), &SvmConfig::default(), 4).unwrap();
        for w in trace.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-6);
        }
    }

    #[test]
    fn zero_model_scores_zero() {
        let m = LinearSvmModel {
            weights: vec![0.0; 3],
            bias: 0.0,
            regularization: 1.0,
            epochs: 1,
            seed: 0,
            standardizer: Standardizer::identity(3),
        };
        assert_eq!(m.predict_score(&[4.0, -1.0, 7.5]).unwrap(), 0.0);
        assert!(m.predict_score(&[1.0]).is_err());
    }

    #[test]
    fn duplicated_rows_same_boundary() {
        let base = blobs();
        let mut rows = base.rows().to_vec();
        rows.extend_from_slice(base.rows());
        let mut labels = base.labels().to_vec();
        labels.extend_from_slice(base.labels());
        let doubled = LabeledSet::new(rows, labels).unwrap();
        let cfg = SvmConfig {
            epochs: 20_000,
            ..SvmConfig::default()
        };
        let (a, _) = train_svm_with(&base, &cfg, 3).unwrap();
        let (b, _) = train_svm_with(&doubled, &cfg, 3).unwrap();
        for x in base.rows() {
            let pa = a.predict_score(x).unwrap();
            let pb = b.predict_score(x).unwrap();
            assert!((pa - pb).abs() < 1e-6, "{pa} vs {pb}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let d = LabeledSet::new(vec![vec![0.0], vec![1.0]], vec![Label::Imposter; 2]).unwrap();
        assert!(train_svm(&d, 1e-2, 10, 0).is_err());
    }
}
