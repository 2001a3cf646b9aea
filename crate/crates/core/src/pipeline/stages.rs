use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::{DeciderKind, ExperimentConfig, Layout, Set};
use crate::cohort::{self, ClusterAssignment};
use crate::decision::{train_mlp_with, train_svm_with, DecisionModel, LabeledSet};
use crate::error::{Error, Result};
use crate::features::{
    assemble_with, background_scores, feat_rank_diff, feat_rank_position, imbalance_mask,
    Condition, ScoreVector,
};
use crate::gmm::{avg_loglik, em_fit, map_adapt, DiagGmm, EmFit, SpeakerModel};
use crate::io::{self, FeatureRow, ScoreRow};
use crate::metrics::{compute_eer, det_curve, rank_histogram, EvalReport, Label, TrialRecord};
use crate::synth::generate_corpus;

fn write_logged(path: &Path, bytes: &[u8]) -> Result<()> {
    io::write_bytes(path, bytes)?;
    info!("{}  {}", hex::encode(Sha256::digest(bytes)), path.display());
    Ok(())
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingInput(path))
    }
}

fn read_pairs(path: &Path, header: &str) -> Result<Vec<(String, String)>> {
    let text = io::read_text(path)?;
    let name = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => {
            return Err(Error::Parse {
                source_name: name,
                location: "line 1".into(),
                message: format!("expected header {header}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.split(',').collect::<Vec<_>>()[..] {
            [a, b] if !a.is_empty() && !b.is_empty() => Ok((a.to_string(), b.to_string())),
            _ => Err(Error::Parse {
                source_name: name.clone(),
                location: format!("line {}", i + 1),
                message: "expected two nonempty columns".into(),
            }),
        })
        .collect()
}

fn read_split(layout: &Layout) -> Result<Vec<(String, Set)>> {
    read_pairs(&require(layout.split())?, "speaker,set")?
        .into_iter()
        .map(|(spk, set)| match set.as_str() {
            "dev" => Ok((spk, Set::Dev)),
            "eval" => Ok((spk, Set::Eval)),
            other => Err(Error::Parse {
                source_name: layout.split().display().to_string(),
                location: format!("speaker {spk}"),
                message: format!("unknown set {other:?}"),
            }),
        })
        .collect()
}

fn speakers_in(split: &[(String, Set)], set: Set) -> Vec<String> {
    split
        .iter()
        .filter(|(_, s)| *s == set)
        .map(|(spk, _)| spk.clone())
        .collect()
}

/// Generates the synthetic corpus and the dev/eval speaker split.
pub fn synth(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let corpus = generate_corpus(&cfg.synth)?;
    write_logged(&layout.ubm_train(), &io::encode_features(&corpus.ubm_train))?;
    for (spk, feats) in &corpus.enrollments {
        write_logged(&layout.enroll(spk), &io::encode_features(feats))?;
    }
    let mut tests = String::from("utterance_id,speaker\n");
    for t in &corpus.tests {
        write_logged(&layout.test(&t.id), &io::encode_features(&t.features))?;
        writeln!(tests, "{},{}", t.id, t.speaker).unwrap();
    }
    write_logged(&layout.tests(), tests.as_bytes())?;
    write_logged(&layout.trials(), io::trials_to_csv(&corpus.trials)?.as_bytes())?;
    let dev = cfg.dev_speakers();
    let mut split = String::from("speaker,set\n");
    for (i, (spk, _)) in corpus.enrollments.iter().enumerate() {
        writeln!(split, "{spk},{}", if i < dev { Set::Dev } else { Set::Eval }).unwrap();
    }
    write_logged(&layout.split(), split.as_bytes())
}

pub fn train_ubm(cfg: &ExperimentConfig, layout: &Layout) -> Result<EmFit> {
    let data = io::read_features(&require(layout.ubm_train())?)?;
    let fit = em_fit(&data, cfg.gmm.components, cfg.stage_seed("gmm"), &cfg.gmm.em_options())?;
    let mut trace = String::from("iteration,log_likelihood\n");
    for (i, ll) in fit.log_likelihoods.iter().enumerate() {
        writeln!(trace, "{i},{ll:?}").unwrap();
    }
    write_logged(&layout.em_trace(), trace.as_bytes())?;
    write_logged(&layout.ubm(), io::gmm_to_json(&fit.gmm).as_bytes())?;
    Ok(fit)
}

fn load_ubm(layout: &Layout) -> Result<DiagGmm> {
    let path = require(layout.ubm())?;
    io::gmm_from_json(&io::read_text(&path)?, &path.display().to_string())
}

/// MAP-adapts one model per enrolled speaker (dev and eval alike).
pub fn adapt(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<(String, SpeakerModel)>> {
    let ubm = load_ubm(layout)?;
    let split = read_split(layout)?;
    let models = split
        .par_iter()
        .map(|(spk, _)| {
            let data = io::read_features(&require(layout.enroll(spk))?)?;
            Ok((spk.clone(), map_adapt(&ubm, &data, cfg.gmm.relevance)?))
        })
        .collect::<Result<Vec<_>>>()?;
    write_logged(&layout.speakers(), io::speaker_models_to_json(&models).as_bytes())?;
    Ok(models)
}

fn load_speakers(layout: &Layout, ubm: &DiagGmm) -> Result<Vec<(String, SpeakerModel)>> {
    let path = require(layout.speakers())?;
    io::speaker_models_from_json(&io::read_text(&path)?, &path.display().to_string(), ubm)
}

fn dev_models(layout: &Layout) -> Result<(Vec<String>, Vec<SpeakerModel>)> {
    let ubm = load_ubm(layout)?;
    let dev: HashSet<String> = speakers_in(&read_split(layout)?, Set::Dev).into_iter().collect();
    Ok(load_speakers(layout, &ubm)?
        .into_iter()
        .filter(|(id, _)| dev.contains(id))
        .unzip())
}

/// Clusters the development speaker models into the cohort.
pub fn cluster(cfg: &ExperimentConfig, layout: &Layout) -> Result<ClusterAssignment> {
    let (ids, models) = dev_models(layout)?;
    let (cohort, assignment) = cohort::kmeans_gmm_with(
        &models,
        cfg.cohort.size,
        cfg.stage_seed("cohort"),
        &cfg.cohort.kmeans_options()?,
    )?;
    info!("cohort of {} from {} dev speakers, J = {}", cohort.size(), ids.len(), assignment.cost);
    write_logged(&layout.cohort(), io::cohort_to_json(&cohort, &assignment, &ids).as_bytes())?;
    Ok(assignment)
}

/// Clustering cost for k = 1..=cost_curve_max over the dev speaker models.
pub fn cost_curve(cfg: &ExperimentConfig, layout: &Layout) -> Result<Vec<(usize, f64)>> {
    let (_, models) = dev_models(layout)?;
    let curve = cohort::cost_curve(
        &models,
        cfg.cohort.cost_curve_max,
        cfg.stage_seed("cost-curve"),
        &cfg.cohort.kmeans_options()?,
    )?;
    let mut csv = String::from("k,cost\n");
    for (k, j) in &curve {
        writeln!(csv, "{k},{j:?}").unwrap();
    }
    write_logged(&layout.cost_curve(), csv.as_bytes())?;
    Ok(curve)
}

/// Trials whose test speaker and claimed speaker both belong to `set`,
/// grouped by utterance in first-appearance order.
fn set_trials(
    trials: &[TrialRecord],
    utt_speaker: &HashMap<String, String>,
    members: &HashSet<String>,
) -> Result<Vec<(String, Vec<TrialRecord>)>> {
    let mut groups: Vec<(String, Vec<TrialRecord>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for t in trials {
        let owner = utt_speaker
            .get(&t.utterance_id)
            .ok_or_else(|| Error::InvalidInput(format!("trial names unknown utterance {}", t.utterance_id)))?;
        if !members.contains(owner) || !members.contains(&t.claimed_speaker) {
            continue;
        }
        let g = *index.entry(t.utterance_id.clone()).or_insert_with(|| {
            groups.push((t.utterance_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(t.clone());
    }
    Ok(groups)
}

/// Scores every within-set trial against claimed model, UBM and cohort.
pub fn score(_cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let ubm = load_ubm(layout)?;
    let speakers: HashMap<String, SpeakerModel> = load_speakers(layout, &ubm)?.into_iter().collect();
    let cohort_path = require(layout.cohort())?;
    let (cohort, _, _) = io::cohort_from_json(&io::read_text(&cohort_path)?, &cohort_path.display().to_string())?;
    if !cohort.centroids[0].shares_structure(&ubm) {
        return Err(Error::InvalidInput("cohort models do not share the UBM's weights/variances".into()));
    }
    let utt_speaker: HashMap<String, String> =
        read_pairs(&require(layout.tests())?, "utterance_id,speaker")?.into_iter().collect();
    let trials_path = require(layout.trials())?;
    let trials = io::trials_from_csv(&io::read_text(&trials_path)?, &trials_path.display().to_string())?;
    let split = read_split(layout)?;
    for set in Set::BOTH {
        let members: HashSet<String> = speakers_in(&split, set).into_iter().collect();
        let groups = set_trials(&trials, &utt_speaker, &members)?;
        let rows: Vec<Vec<ScoreRow>> = groups
            .par_iter()
            .map(|(utt, group)| {
                let feats = io::read_features(&require(layout.test(utt))?)?;
                let (s_ubm, s_cohort) = background_scores(&feats, &ubm, &cohort)?;
                group
                    .iter()
                    .map(|t| {
                        let model = speakers.get(&t.claimed_speaker).ok_or_else(|| {
                            Error::InvalidInput(format!("no model for speaker {}", t.claimed_speaker))
                        })?;
                        let claimed = avg_loglik(&model.gmm, &feats)?;
                        Ok(ScoreRow {
                            trial: t.clone(),
                            scores: ScoreVector::new(claimed, s_ubm, s_cohort.clone())?,
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let rows: Vec<ScoreRow> = rows.into_iter().flatten().collect();
        info!("{set}: scored {} trials", rows.len());
        write_logged(&layout.scores(set), io::score_table_to_csv(&rows)?.as_bytes())?;
    }
    Ok(())
}

fn load_scores(layout: &Layout, set: Set) -> Result<Vec<ScoreRow>> {
    let path = require(layout.scores(set))?;
    io::score_table_from_csv(&io::read_text(&path)?, &path.display().to_string())
}

/// Assembles feature tables for `conditions` on both sets, plus the
/// rank-of-differences vectors and rank-position histograms.
pub fn features(cfg: &ExperimentConfig, layout: &Layout, conditions: &[Condition]) -> Result<()> {
    let scoring = cfg.cohort_scoring()?;
    for set in Set::BOTH {
        let rows = load_scores(layout, set)?;
        let k = rows.first().map_or(cfg.cohort.size, |r| r.scores.cohort_size());
        for &c in conditions {
            let table = rows
                .iter()
                .map(|r| {
                    Ok(FeatureRow {
                        trial: r.trial.clone(),
                        values: assemble_with(&r.scores, c, scoring)?.values,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_logged(
                &layout.features(set, c),
                io::feature_table_to_csv(&c.column_names(k), &table)?.as_bytes(),
            )?;
        }
        let diffs: Vec<FeatureRow> = rows
            .iter()
            .map(|r| FeatureRow {
                trial: r.trial.clone(),
                values: feat_rank_diff(&r.scores),
            })
            .collect();
        let names: Vec<String> = (0..k).map(|i| format!("rank_diff_{i}")).collect();
        write_logged(&layout.rank_diff(set), io::feature_table_to_csv(&names, &diffs)?.as_bytes())?;
        write_rank_histogram(layout, set, &rows, k)?;
    }
    Ok(())
}

fn write_rank_histogram(layout: &Layout, set: Set, rows: &[ScoreRow], k: usize) -> Result<()> {
    let positions = |label: Label| -> Vec<usize> {
        rows.iter()
            .filter(|r| r.trial.label == label)
            .map(|r| feat_rank_position(&r.scores))
            .collect()
    };
    let genuine = rank_histogram(&positions(Label::Genuine), k + 1)?;
    let imposter = rank_histogram(&positions(Label::Imposter), k + 1)?;
    let mut csv = String::from("rank,genuine,imposter\n");
    for r in 0..=k {
        writeln!(csv, "{},{},{}", r + 1, genuine[r], imposter[r]).unwrap();
    }
    write_logged(&layout.rank_histogram(set), csv.as_bytes())
}

fn load_features(layout: &Layout, set: Set, c: Condition) -> Result<Vec<FeatureRow>> {
    let path = require(layout.features(set, c))?;
    io::feature_table_from_csv(&io::read_text(&path)?, &path.display().to_string())
}

/// Trains a decider on dev trials after the top-2 imposter filter.
pub fn train_decider(
    cfg: &ExperimentConfig,
    layout: &Layout,
    kind: DeciderKind,
    condition: Condition,
) -> Result<DecisionModel> {
    let scores = load_scores(layout, Set::Dev)?;
    let feats = load_features(layout, Set::Dev, condition)?;
    if scores.len() != feats.len() || scores.iter().zip(&feats).any(|(s, f)| s.trial != f.trial) {
        return Err(Error::InvalidInput(format!(
            "{} and {} list different trials",
            layout.scores(Set::Dev).display(),
            layout.features(Set::Dev, condition).display()
        )));
    }
    let keyed: Vec<(&TrialRecord, f64)> = scores.iter().map(|s| (&s.trial, s.scores.claimed)).collect();
    let mask = imbalance_mask(&keyed);
    let (rows, labels): (Vec<Vec<f64>>, Vec<Label>) = feats
        .into_iter()
        .zip(mask)
        .filter(|(_, keep)| *keep)
        .map(|(f, _)| (f.values, f.trial.label))
        .unzip();
    let data = LabeledSet::new(rows, labels)?;
    let seed = cfg.stage_seed(&format!("{kind}-{condition}"));
    let model = match kind {
        DeciderKind::Svm => DecisionModel::Svm(train_svm_with(&data, &cfg.svm, seed)?.0),
        DeciderKind::Mlp => DecisionModel::Mlp(train_mlp_with(&data, &cfg.mlp, seed)?),
    };
    info!("{kind} {condition}: trained on {} dev trials", data.len());
    write_logged(&layout.decider(kind, condition), io::decider_to_json(&model).as_bytes())?;
    Ok(model)
}

fn det_csv(scores: &[f64], labels: &[Label]) -> Result<String> {
    let mut csv = String::from("threshold,far,frr\n");
    for p in det_curve(scores, labels)? {
        writeln!(csv, "{:?},{:?},{:?}", p.threshold, p.far, p.frr).unwrap();
    }
    Ok(csv)
}

/// Baseline LLR evaluation on the eval set.
fn evaluate_baseline(layout: &Layout) -> Result<EvalReport> {
    let rows = load_scores(layout, Set::Eval)?;
    let scores: Vec<f64> = rows.iter().map(|r| r.scores.llr()).collect();
    let labels: Vec<Label> = rows.iter().map(|r| r.trial.label).collect();
    let report = compute_eer(&scores, &labels)?;
    write_logged(&layout.baseline_report(), io::report_to_json(&report).as_bytes())?;
    write_logged(&layout.baseline_det(), det_csv(&scores, &labels)?.as_bytes())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub baseline: EvalReport,
}

/// Scores the unfiltered eval trials with a trained decider. Also writes the
/// baseline report, rank histograms, and the cost curve when its inputs exist.
pub fn evaluate(
    cfg: &ExperimentConfig,
    layout: &Layout,
    kind: DeciderKind,
    condition: Condition,
) -> Result<EvalOutcome> {
    let path = require(layout.decider(kind, condition))?;
    let model = io::decider_from_json(&io::read_text(&path)?, &path.display().to_string())?;
    let feats = load_features(layout, Set::Eval, condition)?;
    let scores = feats
        .iter()
        .map(|f| model.predict_score(&f.values))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = feats.iter().map(|f| f.trial.label).collect();
    let report = compute_eer(&scores, &labels)?;
    write_logged(&layout.report(kind, condition), io::report_to_json(&report).as_bytes())?;
    write_logged(&layout.det(kind, condition), det_csv(&scores, &labels)?.as_bytes())?;
    let baseline = evaluate_baseline(layout)?;
    for set in Set::BOTH {
        if layout.scores(set).exists() {
            let rows = load_scores(layout, set)?;
            let k = rows.first().map_or(cfg.cohort.size, |r| r.scores.cohort_size());
            write_rank_histogram(layout, set, &rows, k)?;
        }
    }
    if !layout.cost_curve().exists() && layout.speakers().exists() && layout.ubm().exists() {
        cost_curve(cfg, layout)?;
    }
    info!("{kind} {condition}: EER {:.4}% (baseline {:.4}%)", 100.0 * report.eer, 100.0 * baseline.eer);
    Ok(EvalOutcome { report, baseline })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub decider: DeciderKind,
    pub condition: Condition,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub baseline: EvalReport,
    pub rows: Vec<SummaryRow>,
    pub cost_curve: Vec<(usize, f64)>,
}

impl Summary {
    pub fn eer(&self, decider: DeciderKind, condition: Condition) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.decider == decider && r.condition == condition)
            .map(|r| r.report.eer)
    }

    pub fn to_csv(&self) -> String {
        let mut csv = String::from("decider,condition,eer,baseline_eer,n_target,n_nontarget\n");
        let b = &self.baseline;
        writeln!(csv, "llr,baseline,{:?},{:?},{},{}", b.eer, b.eer, b.n_target, b.n_nontarget).unwrap();
        for r in &self.rows {
            writeln!(
                csv,
                "{},{},{:?},{:?},{},{}",
                r.decider, r.condition, r.report.eer, b.eer, r.report.n_target, r.report.n_nontarget
            )
            .unwrap();
        }
        csv
    }
}

/// Every stage in order, every configured decider on C1..C7.
pub fn run_all(cfg: &ExperimentConfig, layout: &Layout) -> Result<Summary> {
    cfg.validate()?;
    synth(cfg, layout)?;
    train_ubm(cfg, layout)?;
    adapt(cfg, layout)?;
    cluster(cfg, layout)?;
    let curve = cost_curve(cfg, layout)?;
    score(cfg, layout)?;
    features(cfg, layout, &Condition::ALL)?;
    let mut rows = Vec::new();
    let mut baseline = None;
    for &kind in &cfg.experiment.deciders {
        for condition in Condition::ALL {
            train_decider(cfg, layout, kind, condition)?;
            let outcome = evaluate(cfg, layout, kind, condition)?;
            baseline = Some(outcome.baseline);
            rows.push(SummaryRow {
                decider: kind,
                condition,
                report: outcome.report,
            });
        }
    }
    let summary = Summary {
        baseline: baseline.expect("at least one decider"),
        rows,
        cost_curve: curve,
    };
    write_logged(&layout.summary(), summary.to_csv().as_bytes())?;
    write_manifest(layout)?;
    Ok(summary)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let io_err = |source| Error::Io {
        path: dir.to_path_buf(),
        source,
    };
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Writes `manifest.sha256`: one `<hex digest>  <relative path>` line per
/// file under the work directory, sorted by path.
pub fn write_manifest(layout: &Layout) -> Result<String> {
    let mut files = Vec::new();
    collect_files(layout.root(), &mut files)?;
    let manifest_path = layout.manifest();
    let mut entries: Vec<(String, String)> = files
        .into_iter()
        .filter(|p| *p != manifest_path)
        .map(|p| {
            let rel = p
                .strip_prefix(layout.root())
                .unwrap_or(&p)
                .to_string_lossy()
                .replace('\\', "/");
            Ok((rel, hex::encode(Sha256::digest(io::read_bytes(&p)?))))
        })
        .collect::<Result<_>>()?;
    entries.sort();
    let mut text = String::new();
    for (rel, digest) in &entries {
        writeln!(text, "{digest}  {rel}").unwrap();
    }
    io::write_bytes(&manifest_path, text.as_bytes())?;
    Ok(text)
}
