//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Oracles here are written independently of the
//! library's implementations.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use cohortsv::cohort::{kmeans_gmm_with, weighted_kl, KmeansOptions};
use cohortsv::decision::{
    accuracy, train_mlp, train_svm, DecisionModel, LabeledSet, MlpConfig, MlpModel, Standardizer,
};
use cohortsv::features::{feat_rank_position, Condition};
use cohortsv::gmm::{em_fit, map_adapt, DiagGmm, EmOptions, FeatureMatrix, SpeakerModel};
use cohortsv::io;
use cohortsv::metrics::{compute_eer, Label};
use cohortsv::pipeline::{self, DeciderKind, ExperimentConfig, Layout, Set};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

/// EERs observed on the first audited run of the bundled config (seed 42).
const FROZEN_BASELINE_EER: f64 = 0.02666666666666667;
const FROZEN_MLP_C3_EER: f64 = 0.02666666666666667;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- C1

fn random_dataset(seed: u64, frames: usize, dim: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..dim).map(|_| 4.0 * normal(&mut rng)).collect())
        .collect();
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let c = &centers[rng.random_range(0..centers.len())];
            let s = rng.random_range(0.3..2.0);
            c.iter().map(|m| m + s * normal(&mut rng)).collect()
        })
        .collect();
    FeatureMatrix::from_rows(&rows).unwrap()
}

fn c1_em_monotonicity() -> Outcome {
    let opts = EmOptions {
        iterations: 50,
        min_gain: 0.0,
        ..EmOptions::default()
    };
    let mut worst = f64::NEG_INFINITY;
    let mut steps = 0;
    for seed in 0..20 {
        let data = random_dataset(seed, 400, 4);
        let fit = em_fit(&data, 4, seed, &opts).map_err(e)?;
        for (i, w) in fit.log_likelihoods.windows(2).enumerate() {
            let drop = w[0] - w[1];
            worst = worst.max(drop);
            steps += 1;
            ensure(drop <= 1e-8, || {
                format!("seed {seed}: total log-likelihood fell by {drop:e} at iteration {}", i + 1)
            })?;
        }
    }
    Ok(format!("{steps} EM steps over 20 datasets, largest decrease {worst:e}"))
}

// ---------------------------------------------------------------- C2

fn random_ubm(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> DiagGmm {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let means = (0..m)
        .map(|_| (0..dim).map(|_| 3.0 * normal(rng)).collect())
        .collect();
    let vars = (0..m)
        .map(|_| (0..dim).map(|_| rng.random_range(0.5..2.0)).collect())
        .collect();
    DiagGmm::new(weights, means, vars).unwrap()
}

/// Per-component occupancy and first-order statistics, computed frame by
/// frame with a max-shifted log-sum.
fn posterior_means(ubm: &DiagGmm, data: &FeatureMatrix) -> Vec<(f64, Vec<f64>)> {
    let (m, dim) = (ubm.components(), ubm.dim());
    let mut occ = vec![0.0; m];
    let mut first = vec![vec![0.0; dim]; m];
    for row in data.rows() {
        let logs: Vec<f64> = (0..m)
            .map(|i| {
                let mut l = ubm.weights()[i].ln();
                for d in 0..dim {
                    let v = ubm.variance(i)[d];
                    let z = f64::from(row[d]) - ubm.mean(i)[d];
                    l -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + z * z / v);
                }
                l
            })
            .collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: f64 = logs.iter().map(|l| (l - top).exp()).sum();
        for i in 0..m {
            let g = (logs[i] - top).exp() / norm;
            occ[i] += g;
            for d in 0..dim {
                first[i][d] += g * f64::from(row[d]);
            }
        }
    }
    occ.into_iter()
        .zip(first)
        .map(|(n, f)| (n, f.into_iter().map(|x| x / n).collect()))
        .collect()
}

fn c2_map_limits() -> Outcome {
    let mut worst_ubm = 0.0f64;
    let mut worst_data = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let ubm = random_ubm(&mut rng, 6, 3);
        let data = random_dataset(200 + seed, 300, 3);

        let stiff = map_adapt(&ubm, &data, 1e12).map_err(e)?;
        for (a, b) in stiff.gmm.means_flat().iter().zip(ubm.means_flat()) {
            worst_ubm = worst_ubm.max((a - b).abs());
        }

        let free = map_adapt(&ubm, &data, 0.0).map_err(e)?;
        for (i, (n, mean)) in posterior_means(&ubm, &data).into_iter().enumerate() {
            if n < 1e-6 {
                continue;
            }
            for d in 0..3 {
                worst_data = worst_data.max((free.gmm.mean(i)[d] - mean[d]).abs());
            }
        }
    }
    ensure(worst_ubm < 1e-6, || format!("relevance 1e12 moved a mean by {worst_ubm:e}"))?;
    ensure(worst_data <= 1e-9, || format!("relevance 0 missed the data mean by {worst_data:e}"))?;
    Ok(format!("max |adapted-UBM| {worst_ubm:.2e}, max |adapted-data| {worst_data:.2e}"))
}

// ---------------------------------------------------------------- C3

fn c3_kl_properties() -> Outcome {
    let a = DiagGmm::new(vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).unwrap();
    let b = DiagGmm::new(vec![1.0], vec![vec![2.0]], vec![vec![1.0]]).unwrap();
    let hand = weighted_kl(&a, &b).map_err(e)?;
    ensure(hand == 4.0, || format!("1-D hand case gave {hand}, expected 4.0"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_asym = 0.0f64;
    for _ in 0..50 {
        let x = random_ubm(&mut rng, 4, 3);
        let means: Vec<f64> = x.means_flat().iter().map(|m| m + normal(&mut rng)).collect();
        let vars: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(0.5..2.0)).collect())
            .collect();
        let y = DiagGmm::new(
            x.weights().to_vec(),
            means.chunks(3).map(<[f64]>::to_vec).collect(),
            vars,
        )
        .unwrap();
        let self_dist = weighted_kl(&x, &x).map_err(e)?;
        ensure(self_dist == 0.0, || format!("D(a,a) = {self_dist}"))?;
        let (xy, yx) = (weighted_kl(&x, &y).map_err(e)?, weighted_kl(&y, &x).map_err(e)?);
        worst_asym = worst_asym.max((xy - yx).abs());
    }
    ensure(worst_asym <= 1e-12, || format!("asymmetry {worst_asym:e}"))?;
    Ok(format!("hand value {hand}, D(a,a)=0 on 50 models, max |D(a,b)-D(b,a)| {worst_asym:.1e}"))
}

// ---------------------------------------------------------------- C4

/// Weighted KL between two mean vectors of models that share weights and
/// variances.
fn kl_shared(ubm: &DiagGmm, a: &[f64], b: &[f64]) -> f64 {
    let dim = ubm.dim();
    let mut total = 0.0;
    for i in 0..ubm.components() {
        let mut s = 0.0;
        for d in 0..dim {
            let z = a[i * dim + d] - b[i * dim + d];
            s += z * z / ubm.variance(i)[d];
        }
        total += ubm.weights()[i] * s;
    }
    total
}

fn exhaustive_two_way(ubm: &DiagGmm, means: &[Vec<f64>]) -> f64 {
    let n = means.len();
    let len = means[0].len();
    let mut best = f64::INFINITY;
    // Model 0 always in cluster 0, so each split is visited once.
    for mask in 1u32..(1 << (n - 1)) {
        let label = |i: usize| i > 0 && mask & (1 << (i - 1)) != 0;
        let mut cost = 0.0;
        for side in [false, true] {
            let members: Vec<&Vec<f64>> = (0..n).filter(|&i| label(i) == side).map(|i| &means[i]).collect();
            let centroid: Vec<f64> = (0..len)
                .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
                .collect();
            cost += members.iter().map(|m| kl_shared(ubm, m, &centroid)).sum::<f64>();
        }
        best = best.min(cost / n as f64);
    }
    best
}

fn c4_kmeans_oracle() -> Outcome {
    let opts = KmeansOptions {
        restarts: 20,
        ..KmeansOptions::default()
    };
    let mut worst = 0.0f64;
    for set in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + set);
        let ubm = random_ubm(&mut rng, 3, 2);
        let means: Vec<Vec<f64>> = (0..6)
            .map(|_| ubm.means_flat().iter().map(|m| m + normal(&mut rng)).collect())
            .collect();
        let models: Vec<SpeakerModel> = means
            .iter()
            .map(|m| SpeakerModel::from_parts(ubm.with_means(m.clone()).unwrap(), &ubm).unwrap())
            .collect();
        let (_, assignment) = kmeans_gmm_with(&models, 2, set, &opts).map_err(e)?;
        let oracle = exhaustive_two_way(&ubm, &means);
        let gap = (assignment.cost - oracle).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-9, || {
            format!("set {set}: K-means J {} vs exhaustive {oracle}", assignment.cost)
        })?;
    }
    Ok(format!("10 sets, max |J - J*| {worst:.1e}"))
}

// ---------------------------------------------------------------- C5

/// Brute force: every distinct score plus +inf as a threshold, each
/// counted against every trial.
fn brute_force_eer(scores: &[f64], labels: &[Label]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);
    let n_gen = labels.iter().filter(|l| l.is_genuine()).count() as f64;
    let n_imp = labels.len() as f64 - n_gen;
    let rates: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let mut fa = 0usize;
            let mut fr = 0usize;
            for (s, l) in scores.iter().zip(labels) {
                match (l.is_genuine(), *s >= t) {
                    (false, true) => fa += 1,
                    (true, false) => fr += 1,
                    _ => {}
                }
            }
            (fa as f64 / n_imp, fr as f64 / n_gen)
        })
        .collect();
    let j = rates.iter().position(|(fa, fr)| fa - fr <= 0.0).unwrap();
    let (fa_b, fr_b) = rates[j];
    if j == 0 || fa_b - fr_b == 0.0 {
        return fa_b;
    }
    let (fa_a, fr_a) = rates[j - 1];
    let t = (fa_a - fr_a) / ((fa_a - fr_a) - (fa_b - fr_b));
    fa_a + t * (fa_b - fa_a)
}

fn c5_eer_oracle() -> Outcome {
    let hand_scores = [0.9, 0.8, 0.95, 0.1];
    let hand_labels = [Label::Genuine, Label::Genuine, Label::Imposter, Label::Imposter];
    let hand = compute_eer(&hand_scores, &hand_labels).map_err(e)?.eer;
    ensure(hand == 0.5, || format!("hand case EER {hand}, expected 0.5"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for set in 0..50 {
        let n = rng.random_range(2..=500);
        let coarse = set % 3 == 0;
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.3) { Label::Genuine } else { Label::Imposter })
            .collect();
        labels[0] = Label::Genuine;
        labels[1] = Label::Imposter;
        let scores: Vec<f64> = labels
            .iter()
            .map(|l| {
                let s = normal(&mut rng) + if l.is_genuine() { 1.0 } else { 0.0 };
                // Every third set is rounded to force tied scores.
                if coarse { (s * 4.0).round() / 4.0 } else { s }
            })
            .collect();
        let got = compute_eer(&scores, &labels).map_err(e)?.eer;
        let want = brute_force_eer(&scores, &labels);
        ensure(got == want, || format!("set {set} (n={n}): EER {got} vs brute force {want}"))?;
    }
    Ok("hand case 0.5; 50 random sets identical to brute force".into())
}

// ---------------------------------------------------------------- C6

fn c6_mlp_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut model =
        MlpModel::init(5, Standardizer::identity(5), MlpConfig::default(), 7).map_err(e)?;
    ensure(model.hidden_dim == 50, || format!("hidden width {}", model.hidden_dim))?;
    let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..5).map(|_| normal(&mut rng)).collect()).collect();
    let labels: Vec<Label> = (0..16)
        .map(|i| if i % 3 == 0 { Label::Genuine } else { Label::Imposter })
        .collect();

    let (_, grad) = model.loss_and_gradient(&rows, &labels).map_err(e)?;
    let base = model.parameters();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for p in 0..base.len() {
        let mut probe = base.clone();
        probe[p] = base[p] + h;
        model.set_parameters(&probe).map_err(e)?;
        let up = model.loss_and_gradient(&rows, &labels).map_err(e)?.0;
        probe[p] = base[p] - h;
        model.set_parameters(&probe).map_err(e)?;
        let down = model.loss_and_gradient(&rows, &labels).map_err(e)?.0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[p] - numeric).abs() / (grad[p].abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        ensure(rel <= 1e-4, || {
            format!("parameter {p}: analytic {} vs numeric {numeric} (rel {rel:e})", grad[p])
        })?;
    }
    Ok(format!("{} parameters, max relative error {worst:.2e}", base.len()))
}

// ---------------------------------------------------------------- C7

fn c7_classifier_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let (c, l) = if i % 2 == 0 { (3.0, Label::Genuine) } else { (-3.0, Label::Imposter) };
        rows.push(vec![c + 0.5 * normal(&mut rng), -c + 0.5 * normal(&mut rng)]);
        labels.push(l);
    }
    let blobs = LabeledSet::new(rows, labels).map_err(e)?;
    let xor = LabeledSet::new(
        vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        vec![Label::Imposter, Label::Imposter, Label::Genuine, Label::Genuine],
    )
    .map_err(e)?;

    let svm_blobs = accuracy(&DecisionModel::Svm(train_svm(&blobs, 1e-2, 200, 1).map_err(e)?), &blobs).map_err(e)?;
    let svm_xor = accuracy(&DecisionModel::Svm(train_svm(&xor, 1e-2, 200, 1).map_err(e)?), &xor).map_err(e)?;
    let mlp_xor = accuracy(&DecisionModel::Mlp(train_mlp(&xor, 5000, 0.05, 1).map_err(e)?), &xor).map_err(e)?;
    ensure(svm_blobs == 1.0, || format!("SVM blob accuracy {svm_blobs}"))?;
    ensure(svm_xor <= 0.75, || format!("SVM XOR accuracy {svm_xor}"))?;
    ensure(mlp_xor == 1.0, || format!("MLP XOR accuracy {mlp_xor}"))?;
    Ok(format!("SVM blobs {svm_blobs}, SVM XOR {svm_xor}, MLP XOR {mlp_xor}"))
}

// ---------------------------------------------------------------- C8-C10

fn scored_run(dir: &Path) -> Result<(ExperimentConfig, Layout), String> {
    let cfg = ExperimentConfig::bundled();
    let layout = Layout::new(dir);
    pipeline::synth(&cfg, &layout).map_err(e)?;
    pipeline::train_ubm(&cfg, &layout).map_err(e)?;
    pipeline::adapt(&cfg, &layout).map_err(e)?;
    pipeline::cluster(&cfg, &layout).map_err(e)?;
    pipeline::score(&cfg, &layout).map_err(e)?;
    Ok((cfg, layout))
}

fn c8_rank_behavior() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (cfg, layout) = scored_run(dir.path())?;
    ensure(cfg.experiment.seed == 42, || "bundled seed is not 42".into())?;
    let mut parts = Vec::new();
    for set in Set::BOTH {
        let path = layout.scores(set);
        let rows = io::score_table_from_csv(&io::read_text(&path).map_err(e)?, "scores").map_err(e)?;
        let rank1 = |label: Label| {
            let of: Vec<usize> = rows
                .iter()
                .filter(|r| r.trial.label == label)
                .map(|r| feat_rank_position(&r.scores))
                .collect();
            of.iter().filter(|&&p| p == 1).count() as f64 / of.len() as f64
        };
        let (g, i) = (rank1(Label::Genuine), rank1(Label::Imposter));
        ensure(g - i >= 0.3, || format!("{set}: genuine rank-1 {g:.3} vs imposter {i:.3}"))?;
        parts.push(format!("{set} genuine {g:.3} / imposter {i:.3}"));
    }
    Ok(format!("rank-1 fractions: {}", parts.join(", ")))
}

fn c9_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (cfg, layout) = scored_run(dir.path())?;
    pipeline::features(&cfg, &layout, &[Condition::C3]).map_err(e)?;
    pipeline::train_decider(&cfg, &layout, DeciderKind::Mlp, Condition::C3).map_err(e)?;
    let out = pipeline::evaluate(&cfg, &layout, DeciderKind::Mlp, Condition::C3).map_err(e)?;
    let (c3, base) = (out.report.eer, out.baseline.eer);
    ensure(c3 <= base, || format!("MLP C3 EER {c3} above baseline {base}"))?;
    ensure(base == FROZEN_BASELINE_EER && c3 == FROZEN_MLP_C3_EER, || {
        format!("regression: baseline {base:?} (frozen {FROZEN_BASELINE_EER:?}), C3 {c3:?} (frozen {FROZEN_MLP_C3_EER:?})")
    })?;
    Ok(format!("MLP C3 EER {:.4}% <= baseline {:.4}%", 100.0 * c3, 100.0 * base))
}

fn tree(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) -> Result<(), String> {
        for entry in std::fs::read_dir(dir).map_err(e)? {
            let path = entry.map_err(e)?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).map_err(e)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}

fn c10_determinism() -> Outcome {
    let cfg = ExperimentConfig::bundled();
    let (a, b) = (tempfile::tempdir().map_err(e)?, tempfile::tempdir().map_err(e)?);
    pipeline::run_all(&cfg, &Layout::new(a.path())).map_err(e)?;
    pipeline::run_all(&cfg, &Layout::new(b.path())).map_err(e)?;
    let (ta, tb) = (tree(a.path())?, tree(b.path())?);
    ensure(ta.keys().eq(tb.keys()), || "runs produced different file sets".into())?;
    for (name, bytes) in &ta {
        ensure(*bytes == tb[name], || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files bit-identical across two run-all invocations", ta.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("1  EM monotonicity", 10, c1_em_monotonicity),
        ("2  MAP limits", 5, c2_map_limits),
        ("3  weighted-KL properties", 1, c3_kl_properties),
        ("4  K-means vs exhaustive search", 30, c4_kmeans_oracle),
        ("5  EER vs brute force", 10, c5_eer_oracle),
        ("6  MLP gradient check", 10, c6_mlp_gradient),
        ("7  classifier sanity", 30, c7_classifier_sanity),
        ("8  rank-1 separation", 120, c8_rank_behavior),
        ("9  C3 MLP vs LLR baseline", 300, c9_end_to_end),
        ("10 run-all determinism", 600, c10_determinism),
    ];
    let mut failures = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let mut outcome = run();
        let elapsed = start.elapsed();
        if outcome.is_ok() && elapsed > Duration::from_secs(budget) {
            outcome = Err(format!("took {elapsed:.1?}, budget {budget}s"));
        }
        match outcome {
            Ok(detail) => println!("PASS  criterion {name:<34} {elapsed:>9.2?}  {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL  criterion {name:<34} {elapsed:>9.2?}  {why}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
