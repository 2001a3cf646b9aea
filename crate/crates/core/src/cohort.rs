//! Cohort construction: K-means over speaker GMMs under a weighted KL distance.
//!
//! All models are MAP offspring of one UBM, so components correspond by index
//! and only the means differ. The distance between two such models is
//!
//! ```text
//! D(a, b) = sum_i w_i * 1/2 * (mu_i^a - mu_i^b)^T (S_i^a^-1 + S_i^b^-1) (mu_i^a - mu_i^b)
//! ```
//!
//! which with shared variances is a weighted Mahalanobis distance, and the
//! per-component mean average is its exact centroid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::gmm::{DiagGmm, SpeakerModel};

pub const DEFAULT_COHORT_SIZE: usize = 10;
pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_KMEANS_ITERATIONS: usize = 100;

/// Which precision term the per-component KL uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlForm {
    /// `S_a^-1 + S_b^-1`: the mean term of the symmetric KL divergence.
    #[default]
    Symmetric,
    /// `S_a^-1 - S_b^-1`. Identically zero when variances are shared, which
    /// they always are after mean-only MAP; kept for comparison runs only.
    DifferenceOfPrecisions,
}

impl std::str::FromStr for KlForm {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Self::Symmetric),
            "difference" => Ok(Self::DifferenceOfPrecisions),
            other => Err(invalid(format!("unknown KL form {other:?}"))),
        }
    }
}

pub fn weighted_kl(a: &DiagGmm, b: &DiagGmm) -> Result<f64> {
    weighted_kl_with(a, b, KlForm::Symmetric)
}

pub fn weighted_kl_with(a: &DiagGmm, b: &DiagGmm, form: KlForm) -> Result<f64> {
    if a.components() != b.components() || a.dim() != b.dim() {
        return Err(invalid(format!(
            "cannot compare a {}x{} mixture with a {}x{} one",
            a.components(),
            a.dim(),
            b.components(),
            b.dim()
        )));
    }
    if a.weights() != b.weights() {
        return Err(invalid("weighted KL needs mixtures with identical weights"));
    }
    let sign = match form {
        KlForm::Symmetric => 1.0,
        KlForm::DifferenceOfPrecisions => -1.0,
    };
    let mut total = 0.0;
    for i in 0..a.components() {
        let mut kl = 0.0;
        for d in 0..a.dim() {
            let diff = a.mean(i)[d] - b.mean(i)[d];
            kl += diff * diff * (1.0 / a.variance(i)[d] + sign / b.variance(i)[d]);
        }
        total += a.weights()[i] * 0.5 * kl;
    }
    Ok(total)
}

/// Cluster centroids; each one is a cohort model.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub centroids: Vec<DiagGmm>,
}

impl Cohort {
    pub fn size(&self) -> usize {
        self.centroids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster index per input model.
    pub labels: Vec<usize>,
    /// Mean distance of each model to its centroid.
    pub cost: f64,
}

#[derive(Debug, Clone)]
pub struct KmeansOptions {
    /// Lloyd iterations per restart (upper bound; stops on convergence).
    pub iterations: usize,
    pub restarts: usize,
    pub form: KlForm,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_KMEANS_ITERATIONS,
            restarts: DEFAULT_RESTARTS,
            form: KlForm::Symmetric,
        }
    }
}

/// Result of one Lloyd run, kept for inspection.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub labels: Vec<usize>,
    /// k x (M*dim) centroid means.
    pub centroids: Vec<Vec<f64>>,
    pub cost: f64,
    /// Cost after every assignment/update round.
    pub cost_trace: Vec<f64>,
}

/// Models reduced to flat mean vectors plus the per-coordinate metric
/// `w_i * 1/2 * (1/v_a + +-1/v_b)`, valid because all variances are shared.
struct ModelSpace<'a> {
    template: &'a DiagGmm,
    means: Vec<&'a [f64]>,
    metric: Vec<f64>,
}

impl<'a> ModelSpace<'a> {
    fn new(models: &'a [SpeakerModel], form: KlForm) -> Result<Self> {
        let template = &models
            .first()
            .ok_or_else(|| invalid("cannot cluster an empty model set"))?
            .gmm;
        if models.iter().any(|m| !m.gmm.shares_structure(template)) {
            return Err(invalid(
                "models must share weights and variances (MAP offspring of one UBM)",
            ));
        }
        let dim = template.dim();
        let sign = match form {
            KlForm::Symmetric => 1.0,
            KlForm::DifferenceOfPrecisions => -1.0,
        };
        let metric = template
            .variances_flat()
            .iter()
            .enumerate()
            .map(|(j, v)| template.weights()[j / dim] * 0.5 * (1.0 / v + sign / v))
            .collect();
        Ok(Self {
            template,
            means: models.iter().map(|m| m.gmm.means_flat()).collect(),
            metric,
        })
    }

    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.metric)
            .map(|((x, y), s)| {
                let d = x - y;
                s * d * d
            })
            .sum()
    }

    fn len(&self) -> usize {
        self.means.len()
    }

    /// Nearest centroid per model (ties to the lower index) and its distance.
    fn assign(&self, centroids: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>) {
        self.means
            .iter()
            .map(|m| {
                let mut best = (0, f64::INFINITY);
                for (c, cen) in centroids.iter().enumerate() {
                    let d = self.dist(m, cen);
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best
            })
            .unzip()
    }

    fn centroid(&self, members: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut acc = vec![0.0; self.metric.len()];
        let mut count = 0usize;
        for m in members {
            for (a, v) in acc.iter_mut().zip(self.means[m]) {
                *a += v;
            }
            count += 1;
        }
        acc.iter_mut().for_each(|a| *a /= count as f64);
        acc
    }

    fn seed_pp(&self, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut chosen = vec![rng.random_range(0..n)];
        let mut nearest = vec![f64::INFINITY; n];
        while chosen.len() < k {
            let last = self.means[*chosen.last().unwrap()];
            for (i, best) in nearest.iter_mut().enumerate() {
                *best = best.min(self.dist(self.means[i], last));
            }
            let total: f64 = nearest.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut pick = None;
                for (i, w) in nearest.iter().enumerate() {
                    if *w > 0.0 {
                        pick = Some(i);
                        if target < *w {
                            break;
                        }
                        target -= w;
                    }
                }
                pick.unwrap()
            } else {
                // All remaining models coincide with a centre; take any unused one.
                let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
                unused[rng.random_range(0..unused.len())]
            };
            chosen.push(pick);
        }
        chosen.iter().map(|&i| self.means[i].to_vec()).collect()
    }

    fn lloyd(&self, mut centroids: Vec<Vec<f64>>, iterations: usize) -> LloydRun {
        let k = centroids.len();
        let n = self.len();
        let mut cost_trace = Vec::new();
        let mut labels: Vec<usize> = Vec::new();
        for _ in 0..iterations.max(1) {
            let (mut next, mut dists) = self.assign(&centroids);
            // Empty clusters take the model farthest from its centroid, drawn
            // from clusters that can spare one.
            loop {
                let mut sizes = vec![0usize; k];
                next.iter().for_each(|&c| sizes[c] += 1);
                let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                    break;
                };
                let donor = (0..n)
                    .filter(|&i| sizes[next[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n guarantees a cluster with two members");
                next[donor] = empty;
                dists[donor] = 0.0;
                centroids[empty] = self.means[donor].to_vec();
            }
            let converged = next == labels;
            labels = next;
            for (c, cen) in centroids.iter_mut().enumerate() {
                *cen = self.centroid((0..n).filter(|&i| labels[i] == c));
            }
            cost_trace.push(self.cost(&labels, &centroids));
            if converged {
                break;
            }
        }
        LloydRun {
            cost: *cost_trace.last().unwrap(),
            labels,
            centroids,
            cost_trace,
        }
    }

    fn cost(&self, labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &c)| self.dist(self.means[i], &centroids[c]))
            .sum();
        total / self.len() as f64
    }

    fn best_of_restarts(&self, k: usize, opts: &KmeansOptions, rng: &mut ChaCha8Rng) -> LloydRun {
        let mut best: Option<LloydRun> = None;
        for _ in 0..opts.restarts.max(1) {
            let run = self.lloyd(self.seed_pp(k, rng), opts.iterations);
            if best.as_ref().is_none_or(|b| run.cost < b.cost) {
                best = Some(run);
            }
        }
        best.unwrap()
    }

    fn to_result(&self, run: &LloydRun) -> Result<(Cohort, ClusterAssignment)> {
        let centroids = run
            .centroids
            .iter()
            .map(|m| self.template.with_means(m.clone()))
            .collect::<Result<_>>()?;
        Ok((
            Cohort { centroids },
            ClusterAssignment {
                labels: run.labels.clone(),
                cost: run.cost,
            },
        ))
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(invalid(format!("cluster count {k} must lie in 1..={n}")));
    }
    Ok(())
}

/// K-means over speaker models with default restarts and distance.
pub fn kmeans_gmm(
    models: &[SpeakerModel],
    k: usize,
    iterations: usize,
    seed: u64,
) -> Result<(Cohort, ClusterAssignment)> {
    let opts = KmeansOptions {
        iterations,
        ..KmeansOptions::default()
    };
    kmeans_gmm_with(models, k, seed, &opts)
}

pub fn kmeans_gmm_with(
    models: &[SpeakerModel],
    k: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<(Cohort, ClusterAssignment)> {
    let space = ModelSpace::new(models, opts.form)?;
    check_k(k, space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    space.to_result(&space.best_of_restarts(k, opts, &mut rng))
}

/// One Lloyd run from K-means++ seeding, with its per-round cost trace.
pub fn lloyd_run(
    models: &[SpeakerModel],
    k: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<LloydRun> {
    let space = ModelSpace::new(models, opts.form)?;
    check_k(k, space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(space.lloyd(space.seed_pp(k, &mut rng), opts.iterations))
}

/// Clustering cost J for k = 1..=k_max.
///
/// Each k keeps the best of the seeded restarts and of one extra run that
/// starts from the best (k-1)-solution plus the model farthest from it, so
/// the curve never increases with k.
pub fn cost_curve(
    models: &[SpeakerModel],
    k_max: usize,
    seed: u64,
    opts: &KmeansOptions,
) -> Result<Vec<(usize, f64)>> {
    let space = ModelSpace::new(models, opts.form)?;
    check_k(k_max, space.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut curve = Vec::with_capacity(k_max);
    let mut prev: Option<LloydRun> = None;
    for k in 1..=k_max {
        let mut best = space.best_of_restarts(k, opts, &mut rng);
        if let Some(p) = &prev {
            let far = (0..space.len())
                .max_by(|&a, &b| {
                    let da = space.dist(space.means[a], &p.centroids[p.labels[a]]);
                    let db = space.dist(space.means[b], &p.centroids[p.labels[b]]);
                    da.total_cmp(&db).then(b.cmp(&a))
                })
                .unwrap();
            let mut init = p.centroids.clone();
            init.push(space.means[far].to_vec());
            let grown = space.lloyd(init, opts.iterations);
            if grown.cost < best.cost {
                best = grown;
            }
        }
        curve.push((k, best.cost));
        prev = Some(best);
    }
    Ok(curve)
}

/// J for a given assignment with centroids recomputed as member means.
pub fn clustering_cost(models: &[SpeakerModel], labels: &[usize], form: KlForm) -> Result<f64> {
    let space = ModelSpace::new(models, form)?;
    if labels.len() != space.len() {
        return Err(invalid("one label per model required"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let centroids: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            if labels.contains(&c) {
                space.centroid((0..labels.len()).filter(|&i| labels[i] == c))
            } else {
                vec![0.0; space.metric.len()]
            }
        })
        .collect();
    Ok(space.cost(labels, &centroids))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ubm(dim: usize, m: usize) -> DiagGmm {
        let w = vec![1.0 / m as f64; m];
        let means = (0..m).map(|i| vec![i as f64; dim]).collect();
        let vars = (0..m).map(|i| vec![1.0 + 0.5 * i as f64; dim]).collect();
        DiagGmm::new(w, means, vars).unwrap()
    }

    fn shifted(u: &DiagGmm, shift: f64) -> SpeakerModel {
        let means = u.means_flat().iter().map(|v| v + shift).collect();
        SpeakerModel::from_parts(u.with_means(means).unwrap(), u).unwrap()
    }

    #[test]
    fn hand_value_one_dimension() {
        let a = DiagGmm::new(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
        let b = a.with_means(vec![2.0]).unwrap();
        assert_eq!(weighted_kl(&a, &b).unwrap(), 4.0);
        assert_eq!(weighted_kl_with(&a, &b, KlForm::DifferenceOfPrecisions).unwrap(), 0.0);
    }

    #[test]
    fn zero_on_self_and_symmetric() {
        let u = ubm(3, 4);
        let a = shifted(&u, 0.3).gmm;
        let b = shifted(&u, -1.1).gmm;
        assert_eq!(weighted_kl(&a, &a).unwrap(), 0.0);
        assert_eq!(weighted_kl(&a, &b).unwrap(), weighted_kl(&b, &a).unwrap());
    }

    #[test]
    fn structure_mismatch_rejected() {
        assert!(weighted_kl(&ubm(2, 3), &ubm(2, 4)).is_err());
        assert!(weighted_kl(&ubm(2, 3), &ubm(3, 3)).is_err());
    }

    #[test]
    fn k_equals_n_has_zero_cost() {
        let u = ubm(2, 3);
        let models: Vec<_> = [0.0, 0.5, 1.5, 4.0, -2.0].iter().map(|s| shifted(&u, *s)).collect();
        let (cohort, asg) = kmeans_gmm(&models, 5, 20, 3).unwrap();
        assert_eq!(asg.cost, 0.0);
        assert_eq!(cohort.size(), 5);
        let mut labels = asg.labels.clone();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn single_cluster_is_mean_model() {
        let u = ubm(2, 2);
        let shifts = [0.0, 1.0, 5.0];
        let models: Vec<_> = shifts.iter().map(|s| shifted(&u, *s)).collect();
        for seed in [1, 2, 99] {
            let (cohort, asg) = kmeans_gmm(&models, 1, 10, seed).unwrap();
            let expect: Vec<f64> = u.means_flat().iter().map(|v| v + 2.0).collect();
            for (a, b) in cohort.centroids[0].means_flat().iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(cohort.centroids[0].shares_structure(&u));
            assert_eq!(asg.cost, clustering_cost(&models, &[0, 0, 0], KlForm::Symmetric).unwrap());
        }
    }

    #[test]
    fn recovers_two_groups() {
        let u = ubm(2, 2);
        let models: Vec<_> = [0.0, 0.1, 8.0, 8.2].iter().map(|s| shifted(&u, *s)).collect();
        let (_, asg) = kmeans_gmm(&models, 2, 20, 5).unwrap();
        assert_eq!(asg.labels[0], asg.labels[1]);
        assert_eq!(asg.labels[2], asg.labels[3]);
        assert_ne!(asg.labels[0], asg.labels[2]);
    }

    #[test]
    fn lloyd_cost_never_increases() {
        let u = ubm(2, 3);
        let models: Vec<_> = (0..12).map(|i| shifted(&u, ((i * 7) % 11) as f64 * 0.37)).collect();
        for seed in 0..10 {
            let run = lloyd_run(&models, 4, seed, &KmeansOptions::default()).unwrap();
            for w in run.cost_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-9);
            }
        }
    }

    #[test]
    fn internal_metric_matches_public_distance() {
        let u = ubm(3, 2);
        let a = shifted(&u, 0.4);
        let b = shifted(&u, -0.9);
        let two = [a.clone(), b.clone()];
        let j = clustering_cost(&two, &[0, 0], KlForm::Symmetric).unwrap();
        // Both sit at half the pair distance squared-scaled: D/4 each, mean D/4.
        let d = weighted_kl(&a.gmm, &b.gmm).unwrap();
        assert!((j - d / 4.0).abs() < 1e-12);
    }

    #[test]
    fn bad_k_rejected() {
        let u = ubm(1, 1);
        let models = vec![shifted(&u, 0.0), shifted(&u, 1.0)];
        assert!(kmeans_gmm(&models, 3, 10, 0).is_err());
        assert!(kmeans_gmm(&models, 0, 10, 0).is_err());
        assert!(kmeans_gmm(&[], 1, 10, 0).is_err());
    }
}
