use super::{DiagGmm, FeatureMatrix};
use crate::error::{invalid, Result};

pub const DEFAULT_RELEVANCE: f64 = 16.0;

/// A speaker GMM derived from a UBM by mean-only MAP adaptation.
///
/// Weights and variances are the UBM's, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerModel {
    pub gmm: DiagGmm,
    /// Fingerprint of the UBM this model was adapted from.
    pub ubm_ref: String,
}

impl SpeakerModel {
    /// Wraps a mixture claimed to be adapted from `ubm`, checking that it
    /// shares the UBM's weights and variances.
    pub fn from_parts(gmm: DiagGmm, ubm: &DiagGmm) -> Result<Self> {
        if !gmm.shares_structure(ubm) {
            return Err(invalid(
                "speaker model weights/variances differ from its UBM",
            ));
        }
        Ok(Self {
            gmm,
            ubm_ref: ubm.fingerprint(),
        })
    }
}

/// Zeroth and first order posterior statistics of `data` under `gmm`.
pub(crate) struct SufficientStats {
    pub occupancy: Vec<f64>,
    /// M x dim posterior-weighted sums.
    pub first: Vec<f64>,
}

pub(crate) fn posterior_stats(gmm: &DiagGmm, data: &FeatureMatrix) -> SufficientStats {
    let m = gmm.components();
    let dim = gmm.dim();
    let scorer = gmm.scorer();
    let mut occupancy = vec![0.0; m];
    let mut first = vec![0.0; m * dim];
    let mut buf = vec![0.0; m];
    for x in data.rows() {
        let lse = scorer.joint(x, &mut buf);
        for i in 0..m {
            let post = (buf[i] - lse).exp();
            if post == 0.0 {
                continue;
            }
            occupancy[i] += post;
            for d in 0..dim {
                first[i * dim + d] += post * f64::from(x[d]);
            }
        }
    }
    SufficientStats { occupancy, first }
}

/// Mean-only MAP adaptation with relevance factor `relevance`.
///
/// Component `i` moves to `a_i * E_i + (1 - a_i) * mu_i` with
/// `a_i = n_i / (n_i + relevance)`; unoccupied components keep the UBM mean.
pub fn map_adapt(ubm: &DiagGmm, data: &FeatureMatrix, relevance: f64) -> Result<SpeakerModel> {
    if !(relevance >= 0.0 && relevance.is_finite()) {
        return Err(invalid(format!("relevance factor must be >= 0, got {relevance}")));
    }
    if ubm.dim() != data.dim() {
        return Err(invalid(format!(
            "UBM dim {} does not match data dim {}",
            ubm.dim(),
            data.dim()
        )));
    }
    let dim = ubm.dim();
    let stats = posterior_stats(ubm, data);
    let mut means = ubm.means_flat().to_vec();
    for (i, &n) in stats.occupancy.iter().enumerate() {
        if n <= 0.0 {
            continue;
        }
        let alpha = n / (n + relevance);
        for d in 0..dim {
            let data_mean = stats.first[i * dim + d] / n;
            let prior = means[i * dim + d];
            means[i * dim + d] = alpha * data_mean + (1.0 - alpha) * prior;
        }
    }
    Ok(SpeakerModel {
        gmm: ubm.with_means(means)?,
        ubm_ref: ubm.fingerprint(),
    })
}
