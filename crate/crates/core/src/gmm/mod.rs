//! Diagonal-covariance Gaussian mixtures: containers, scoring, EM and MAP.

mod em;
mod map;

use std::f64::consts::PI;

use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};

pub use em::{em_fit, em_train, EmFit, EmOptions, DEFAULT_EM_ITERATIONS, DEFAULT_FLOOR_RATIO};
pub use map::{map_adapt, SpeakerModel, DEFAULT_RELEVANCE};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Acoustic features, frames x dim, row-major.
///
/// Stored as `f32` like most front ends emit them; all arithmetic on
/// features is carried out in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    frames: usize,
    dim: usize,
    values: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(frames: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if frames == 0 || dim == 0 {
            return Err(invalid(format!(
                "feature matrix needs at least one frame and one dimension, got {frames}x{dim}"
            )));
        }
        if values.len() != frames * dim {
            return Err(invalid(format!(
                "feature matrix {frames}x{dim} needs {} values, got {}",
                frames * dim,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite feature value at frame {}, dim {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { frames, dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid("ragged feature rows"));
        }
        let values = rows.iter().flatten().map(|&v| v as f32).collect();
        Self::new(rows.len(), dim, values)
    }

    /// Stacks matrices of equal dimension frame-wise.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a FeatureMatrix>) -> Result<Self> {
        let mut dim = None;
        let mut values = Vec::new();
        for p in parts {
            match dim {
                None => dim = Some(p.dim),
                Some(d) if d != p.dim => {
                    return Err(invalid(format!("cannot stack dim {} onto dim {d}", p.dim)))
                }
                _ => {}
            }
            values.extend_from_slice(&p.values);
        }
        let dim = dim.ok_or_else(|| invalid("nothing to stack"))?;
        Self::new(values.len() / dim, dim, values)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.dim)
    }
}

/// An M-component Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    dim: usize,
    weights: Vec<f64>,
    /// M x dim, row-major.
    means: Vec<f64>,
    /// M x dim, row-major.
    variances: Vec<f64>,
}

impl DiagGmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(invalid("a mixture needs at least one component"));
        }
        if means.len() != m || variances.len() != m {
            return Err(invalid(format!(
                "{m} weights but {} mean rows and {} variance rows",
                means.len(),
                variances.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().chain(&variances).any(|r| r.len() != dim) {
            return Err(invalid("mean/variance rows must share a nonzero dimension"));
        }
        Self::from_flat(dim, weights, means.concat(), variances.concat())
    }

    pub(crate) fn from_flat(
        dim: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
    ) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("mixture weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("mixture weights sum to {total}, not 1")));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite mixture mean"));
        }
        if variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(invalid("mixture variances must be finite and strictly positive"));
        }
        Ok(Self {
            dim,
            weights,
            means,
            variances,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        &self.means[i * self.dim..(i + 1) * self.dim]
    }

    pub fn variance(&self, i: usize) -> &[f64] {
        &self.variances[i * self.dim..(i + 1) * self.dim]
    }

    pub fn means_flat(&self) -> &[f64] {
        &self.means
    }

    pub fn variances_flat(&self) -> &[f64] {
        &self.variances
    }

    /// Same weights and variances, new means (M x dim, row-major).
    pub fn with_means(&self, means: Vec<f64>) -> Result<Self> {
        if means.len() != self.means.len() {
            return Err(invalid("replacement means have the wrong shape"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite mixture mean"));
        }
        Ok(Self {
            means,
            ..self.clone()
        })
    }

    /// True when both mixtures share component count, dim, weights and
    /// variances bit for bit; the structure every MAP offspring of one UBM has.
    pub fn shares_structure(&self, other: &DiagGmm) -> bool {
        self.dim == other.dim
            && self.weights == other.weights
            && self.variances == other.variances
    }

    /// Hex SHA-256 over the parameter bit patterns. Used as the UBM reference
    /// carried by adapted speaker models.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.dim as u64).to_le_bytes());
        h.update((self.weights.len() as u64).to_le_bytes());
        for v in self.weights.iter().chain(&self.means).chain(&self.variances) {
            h.update(v.to_bits().to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn scorer(&self) -> Scorer<'_> {
        let inv_var: Vec<f64> = self.variances.iter().map(|v| 1.0 / v).collect();
        let log_const = (0..self.components())
            .map(|i| {
                let log_det: f64 = self.variance(i).iter().map(|v| v.ln()).sum();
                self.weights[i].ln() - 0.5 * (self.dim as f64 * LN_2PI + log_det)
            })
            .collect();
        Scorer {
            gmm: self,
            inv_var,
            log_const,
        }
    }
}

/// Precomputed per-component constants for log-domain scoring.
pub(crate) struct Scorer<'a> {
    gmm: &'a DiagGmm,
    inv_var: Vec<f64>,
    log_const: Vec<f64>,
}

impl Scorer<'_> {
    /// Fills `out[i] = log w_i + log N(x; mu_i, Sigma_i)` and returns the
    /// log-sum-exp over components.
    pub(crate) fn joint(&self, x: &[f32], out: &mut [f64]) -> f64 {
        let dim = self.gmm.dim;
        for (i, o) in out.iter_mut().enumerate() {
            let mu = &self.gmm.means[i * dim..(i + 1) * dim];
            let iv = &self.inv_var[i * dim..(i + 1) * dim];
            let mut q = 0.0;
            for d in 0..dim {
                let diff = f64::from(x[d]) - mu[d];
                q += diff * diff * iv[d];
            }
            *o = self.log_const[i] - 0.5 * q;
        }
        log_sum_exp(out)
    }
}

/// `log(sum(exp(v)))`, exact for all-`-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Frame-averaged log-likelihood of `utterance` under `model`.
pub fn avg_loglik(model: &DiagGmm, utterance: &FeatureMatrix) -> Result<f64> {
    if model.dim() != utterance.dim() {
        return Err(invalid(format!(
            "model dim {} does not match utterance dim {}",
            model.dim(),
            utterance.dim()
        )));
    }
    let scorer = model.scorer();
    let mut buf = vec![0.0; model.components()];
    let total: f64 = utterance.rows().map(|x| scorer.joint(x, &mut buf)).sum();
    let avg = total / utterance.frames() as f64;
    if !avg.is_finite() {
        return Err(invalid("utterance has zero likelihood under the model"));
    }
    Ok(avg)
}

/// Baseline log-likelihood ratio: claimed speaker against the UBM.
pub fn llr(speaker: &SpeakerModel, ubm: &DiagGmm, utterance: &FeatureMatrix) -> Result<f64> {
    Ok(avg_loglik(&speaker.gmm, utterance)? - avg_loglik(ubm, utterance)?)
}

/// Direct density of one frame, no log domain. Only meaningful where it does
/// not underflow; exposed for cross-checks.
pub fn density(model: &DiagGmm, x: &[f64]) -> f64 {
    (0..model.components())
        .map(|i| {
            let mut p = model.weights[i];
            for (d, &xd) in x.iter().enumerate() {
                let v = model.variance(i)[d];
                let diff = xd - model.mean(i)[d];
                p *= (-(diff * diff) / (2.0 * v)).exp() / (2.0 * PI * v).sqrt();
            }
            p
        })
        .sum()
}
