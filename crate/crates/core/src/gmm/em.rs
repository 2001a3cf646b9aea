use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DiagGmm, FeatureMatrix};
use crate::error::{invalid, Result};

pub const DEFAULT_EM_ITERATIONS: usize = 20;
/// Variance floor as a fraction of the global per-dimension variance.
pub const DEFAULT_FLOOR_RATIO: f64 = 1e-4;
/// Absolute lower bound on any floor, for dimensions with zero spread.
const MIN_VARIANCE: f64 = 1e-10;
/// Components whose occupancy drops below this keep their previous
/// mean and variance.
const MIN_OCCUPANCY: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub iterations: usize,
    /// Stop once the per-frame average log-likelihood improves by less.
    pub min_gain: f64,
    pub floor_ratio: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_EM_ITERATIONS,
            min_gain: 1e-6,
            floor_ratio: DEFAULT_FLOOR_RATIO,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub gmm: DiagGmm,
    /// Total data log-likelihood of the initial model followed by the model
    /// after each completed iteration.
    pub log_likelihoods: Vec<f64>,
    pub variance_floor: Vec<f64>,
}

/// Trains a diagonal GMM with the default stopping rule and floor.
pub fn em_train(
    data: &FeatureMatrix,
    components: usize,
    iterations: usize,
    seed: u64,
) -> Result<DiagGmm> {
    let opts = EmOptions {
        iterations,
        ..EmOptions::default()
    };
    em_fit(data, components, seed, &opts).map(|f| f.gmm)
}

pub fn em_fit(
    data: &FeatureMatrix,
    components: usize,
    seed: u64,
    opts: &EmOptions,
) -> Result<EmFit> {
    if components == 0 {
        return Err(invalid("EM needs at least one component"));
    }
    if data.frames() < components {
        return Err(invalid(format!(
            "{} frames cannot support {components} components",
            data.frames()
        )));
    }
    if opts.iterations == 0 {
        return Err(invalid("EM needs at least one iteration"));
    }
    let dim = data.dim();
    let n = data.frames();
    let (_, global_var) = moments(data);
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * opts.floor_ratio).max(MIN_VARIANCE))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init_means = kmeans_pp_frames(data, components, &mut rng);
    let init_var: Vec<f64> = global_var
        .iter()
        .zip(&floor)
        .map(|(v, f)| v.max(*f))
        .collect();
    let mut gmm = DiagGmm::from_flat(
        dim,
        vec![1.0 / components as f64; components],
        init_means,
        init_var.repeat(components),
    )?;

    let mut resp = vec![0.0; n * components];
    let mut lls = Vec::with_capacity(opts.iterations + 1);
    let mut ll = e_step(&gmm, data, &mut resp);
    lls.push(ll);
    for _ in 0..opts.iterations {
        gmm = m_step(&gmm, data, &resp, &floor)?;
        let next = e_step(&gmm, data, &mut resp);
        lls.push(next);
        let gain = (next - ll) / n as f64;
        ll = next;
        if gain < opts.min_gain {
            break;
        }
    }
    Ok(EmFit {
        gmm,
        log_likelihoods: lls,
        variance_floor: floor,
    })
}

fn moments(data: &FeatureMatrix) -> (Vec<f64>, Vec<f64>) {
    let dim = data.dim();
    let n = data.frames() as f64;
    let mut mean = vec![0.0; dim];
    for x in data.rows() {
        for d in 0..dim {
            mean[d] += f64::from(x[d]);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in data.rows() {
        for d in 0..dim {
            let diff = f64::from(x[d]) - mean[d];
            var[d] += diff * diff;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

/// K-means++ seeding over frames: first centre uniform, the rest drawn with
/// probability proportional to squared distance from the nearest centre.
fn kmeans_pp_frames(data: &FeatureMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = data.frames();
    let mut centres: Vec<usize> = vec![rng.random_range(0..n)];
    let mut nearest = vec![f64::INFINITY; n];
    while centres.len() < k {
        let last = data.row(*centres.last().unwrap());
        for (t, best) in nearest.iter_mut().enumerate() {
            let d2: f64 = data
                .row(t)
                .iter()
                .zip(last)
                .map(|(a, b)| {
                    let d = f64::from(*a) - f64::from(*b);
                    d * d
                })
                .sum();
            *best = best.min(d2);
        }
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (t, w) in nearest.iter().enumerate() {
                if target < *w {
                    chosen = t;
                    break;
                }
                target -= w;
            }
            // Rounding can land on a zero-weight frame at the tail.
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centres.push(pick);
    }
    centres
        .iter()
        .flat_map(|&t| data.row(t).iter().map(|v| f64::from(*v)))
        .collect()
}

/// Fills responsibilities (frames x M) and returns the total log-likelihood.
fn e_step(gmm: &DiagGmm, data: &FeatureMatrix, resp: &mut [f64]) -> f64 {
    let m = gmm.components();
    let scorer = gmm.scorer();
    let mut total = 0.0;
    for (x, r) in data.rows().zip(resp.chunks_exact_mut(m)) {
        let lse = scorer.joint(x, r);
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(gmm: &DiagGmm, data: &FeatureMatrix, resp: &[f64], floor: &[f64]) -> Result<DiagGmm> {
    let m = gmm.components();
    let dim = gmm.dim();
    let mut occ = vec![0.0; m];
    let mut first = vec![0.0; m * dim];
    for (x, r) in data.rows().zip(resp.chunks_exact(m)) {
        for i in 0..m {
            occ[i] += r[i];
            let acc = &mut first[i * dim..(i + 1) * dim];
            for d in 0..dim {
                acc[d] += r[i] * f64::from(x[d]);
            }
        }
    }
    let mut means = gmm.means_flat().to_vec();
    for i in 0..m {
        if occ[i] > MIN_OCCUPANCY {
            for d in 0..dim {
                means[i * dim + d] = first[i * dim + d] / occ[i];
            }
        }
    }
    let mut second = vec![0.0; m * dim];
    for (x, r) in data.rows().zip(resp.chunks_exact(m)) {
        for i in 0..m {
            let acc = &mut second[i * dim..(i + 1) * dim];
            let mu = &means[i * dim..(i + 1) * dim];
            for d in 0..dim {
                let diff = f64::from(x[d]) - mu[d];
                acc[d] += r[i] * diff * diff;
            }
        }
    }
    let mut variances = gmm.variances_flat().to_vec();
    for i in 0..m {
        if occ[i] > MIN_OCCUPANCY {
            for d in 0..dim {
                variances[i * dim + d] = (second[i * dim + d] / occ[i]).max(floor[d]);
            }
        }
    }
    let total: f64 = occ.iter().sum();
    let weights = occ.iter().map(|o| o / total).collect();
    DiagGmm::from_flat(dim, weights, means, variances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn two_cluster_1d(seed: u64) -> FeatureMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = Normal::new(-5.0, 1.0).unwrap();
        let right = Normal::new(5.0, 1.0).unwrap();
        let mut v: Vec<f32> = (0..500).map(|_| left.sample(&mut rng) as f32).collect();
        v.extend((0..500).map(|_| right.sample(&mut rng) as f32));
        FeatureMatrix::new(1000, 1, v).unwrap()
    }

    #[test]
    fn single_component_is_closed_form() {
        let data = FeatureMatrix::new(
            5,
            2,
            vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0, 2.5, 4.0, -2.0, 1.0],
        )
        .unwrap();
        let g = em_train(&data, 1, 3, 9).unwrap();
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|d| data.rows().map(|r| f64::from(r[d])).collect())
            .collect();
        assert_eq!(g.weights(), &[1.0]);
        for d in 0..2 {
            let mean = cols[d].iter().sum::<f64>() / 5.0;
            let var = cols[d].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
            assert!((g.mean(0)[d] - mean).abs() < 1e-12);
            assert!((g.variance(0)[d] - var).abs() < 1e-12);
        }
    }

    #[test]
    fn recovers_two_separated_gaussians() {
        let g = em_train(&two_cluster_1d(3), 2, 50, 11).unwrap();
        let mut means: Vec<(f64, f64)> = (0..2).map(|i| (g.mean(i)[0], g.weights()[i])).collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((means[0].0 + 5.0).abs() < 0.3, "{means:?}");
        assert!((means[1].0 - 5.0).abs() < 0.3, "{means:?}");
        assert!((means[0].1 - 0.5).abs() < 0.05);
        assert!((means[1].1 - 0.5).abs() < 0.05);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let opts = EmOptions {
            iterations: 30,
            min_gain: 0.0,
            ..EmOptions::default()
        };
        let fit = em_fit(&two_cluster_1d(8), 4, 2, &opts).unwrap();
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let data = two_cluster_1d(5);
        let a = em_train(&data, 3, 10, 77).unwrap();
        let b = em_train(&data, 3, 10, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn variance_floor_holds_on_degenerate_data() {
        // Half the frames are identical: one component collapses onto them.
        let mut v = vec![1.0f32; 50];
        v.extend((0..50).map(|i| i as f32 * 0.37));
        let data = FeatureMatrix::new(100, 1, v).unwrap();
        let fit = em_fit(&data, 3, 1, &EmOptions::default()).unwrap();
        for i in 0..3 {
            assert!(fit.gmm.variance(i)[0] >= fit.variance_floor[0]);
        }
    }

    #[test]
    fn too_few_frames_rejected() {
        let data = FeatureMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(em_train(&data, 3, 5, 0).is_err());
        assert!(em_train(&data, 1, 0, 0).is_err());
    }
}
