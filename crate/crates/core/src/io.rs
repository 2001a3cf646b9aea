//! File formats: features, trials, score/feature tables, models and reports.
//!
//! Binary features (`.cvf`): the 4 bytes `CVF1`, little-endian `u32` frame
//! count, little-endian `u32` dimension, then `frames * dim` little-endian
//! IEEE-754 `f32` values, row-major. Nothing may follow the last value.
//!
//! Text features (`.csv`): one frame per line, values comma-separated, no
//! header. Tables are comma-separated with a header row and no quoting, so
//! ids may not contain commas or line breaks.
//!
//! Models and reports are JSON objects carrying `format_version` and `kind`
//! fields next to explicit shape fields. See `docs/FORMATS.md` at the
//! repository root for the full schemas.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{ClusterAssignment, Cohort};
use crate::decision::{DecisionModel, LinearSvmModel, MlpModel};
use crate::error::{Error, Result};
use crate::features::ScoreVector;
use crate::gmm::{DiagGmm, FeatureMatrix, SpeakerModel};
use crate::metrics::{EvalReport, Label, TrialRecord};

pub const FEATURE_MAGIC: &[u8; 4] = b"CVF1";
pub const FORMAT_VERSION: u32 = 1;

fn parse_err(source: &str, location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        source_name: source.to_string(),
        location,
        message: message.into(),
    }
}

fn line_err(source: &str, line: usize, message: impl Into<String>) -> Error {
    parse_err(source, format!("line {line}"), message)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| {
        parse_err(
            &path.display().to_string(),
            format!("byte offset {}", e.utf8_error().valid_up_to()),
            "invalid UTF-8",
        )
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    fs::write(path, bytes).map_err(io)
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '\n', '\r']) {
        return Err(Error::InvalidInput(format!(
            "id {id:?} cannot be written to a table (empty or contains a separator)"
        )));
    }
    Ok(())
}

// ---- features ---------------------------------------------------------------

pub fn encode_features(m: &FeatureMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * m.values().len());
    out.extend_from_slice(FEATURE_MAGIC);
    out.extend_from_slice(&(m.frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
    for v in m.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], source: &str) -> Result<FeatureMatrix> {
    let at = |off: usize, msg: String| parse_err(source, format!("byte offset {off}"), msg);
    if bytes.len() < 12 {
        return Err(at(bytes.len(), "file shorter than the 12-byte header".into()));
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(at(0, "missing CVF1 magic".into()));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if frames == 0 || dim == 0 {
        return Err(at(4, format!("empty shape {frames}x{dim}")));
    }
    let expected = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| at(4, "shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(at(
            bytes.len().min(expected),
            format!("{frames}x{dim} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    let mut values = Vec::with_capacity(frames * dim);
    for (k, chunk) in bytes[12..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(at(12 + 4 * k, "non-finite feature value".into()));
        }
        values.push(v);
    }
    FeatureMatrix::new(frames, dim, values)
}

pub fn features_to_csv(m: &FeatureMatrix) -> String {
    let mut s = String::new();
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn features_from_csv(text: &str, source: &str) -> Result<FeatureMatrix> {
    let mut dim = None;
    let mut values = Vec::new();
    let mut frames = 0;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split(',')
            .map(|c| {
                let v: f32 = c
                    .trim()
                    .parse()
                    .map_err(|_| line_err(source, i + 1, format!("bad number {c:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(line_err(source, i + 1, "non-finite feature value"))
                }
            })
            .collect::<Result<_>>()?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(line_err(source, i + 1, format!("expected {d} values, found {}", row.len())))
            }
            _ => {}
        }
        values.extend(row);
        frames += 1;
    }
    let dim = dim.ok_or_else(|| line_err(source, 1, "no frames"))?;
    FeatureMatrix::new(frames, dim, values)
}

/// Writes binary for `.cvf`, text for anything else.
pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    if path.extension().is_some_and(|e| e == "cvf") {
        write_bytes(path, &encode_features(m))
    } else {
        write_bytes(path, features_to_csv(m).as_bytes())
    }
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e == "cvf") {
        decode_features(&read_bytes(path)?, &name)
    } else {
        features_from_csv(&read_text(path)?, &name)
    }
}

// ---- tables -----------------------------------------------------------------

const TRIAL_HEADER: &str = "utterance_id,claimed_speaker,label";

/// (1-based line number, cells) of one data row.
type NumberedRow<'a> = (usize, Vec<&'a str>);

/// Splits a headed CSV, checking the header's leading columns, and returns
/// the header cells and the data rows.
fn table_rows<'a>(
    text: &'a str,
    source: &str,
    header_prefix: &[&str],
) -> Result<(Vec<&'a str>, Vec<NumberedRow<'a>>)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| line_err(source, 1, "missing header"))?;
    let header: Vec<&str> = header.split(',').map(str::trim).collect();
    if header.len() < header_prefix.len() || header[..header_prefix.len()] != *header_prefix {
        return Err(line_err(
            source,
            1,
            format!("header must start with {}", header_prefix.join(",")),
        ));
    }
    let rows = lines
        .map(|(i, l)| {
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(line_err(
                    source,
                    i + 1,
                    format!("expected {} columns, found {}", header.len(), cells.len()),
                ));
            }
            Ok((i + 1, cells))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn trial_from_cells(cells: &[&str], source: &str, line: usize) -> Result<TrialRecord> {
    let label: Label = cells[2]
        .parse()
        .map_err(|_| line_err(source, line, format!("unknown label {:?}", cells[2])))?;
    TrialRecord::new(cells[0], cells[1], label).map_err(|e| line_err(source, line, e.to_string()))
}

fn parse_f64(cell: &str, source: &str, line: usize) -> Result<f64> {
    let v: f64 = cell
        .parse()
        .map_err(|_| line_err(source, line, format!("bad number {cell:?}")))?;
    if !v.is_finite() {
        return Err(line_err(source, line, "non-finite value"));
    }
    Ok(v)
}

fn push_trial(s: &mut String, t: &TrialRecord) -> Result<()> {
    check_id(&t.utterance_id)?;
    check_id(&t.claimed_speaker)?;
    write!(s, "{},{},{}", t.utterance_id, t.claimed_speaker, t.label).unwrap();
    Ok(())
}

pub fn trials_to_csv(trials: &[TrialRecord]) -> Result<String> {
    let mut s = format!("{TRIAL_HEADER}\n");
    for t in trials {
        push_trial(&mut s, t)?;
        s.push('\n');
    }
    Ok(s)
}

pub fn trials_from_csv(text: &str, source: &str) -> Result<Vec<TrialRecord>> {
    let (header, rows) = table_rows(text, source, &["utterance_id", "claimed_speaker", "label"])?;
    if header.len() != 3 {
        return Err(line_err(source, 1, "trial lists have exactly three columns"));
    }
    rows.iter()
        .map(|(line, cells)| trial_from_cells(cells, source, *line))
        .collect()
}

/// One scored trial: the claim plus its score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub trial: TrialRecord,
    pub scores: ScoreVector,
}

pub fn score_table_to_csv(rows: &[ScoreRow]) -> Result<String> {
    let k = rows.first().map_or(0, |r| r.scores.cohort_size());
    let mut s = format!("{TRIAL_HEADER},s_claimed,s_ubm");
    for i in 0..k {
        write!(s, ",cohort_{i}").unwrap();
    }
    s.push('\n');
    for r in rows {
        if r.scores.cohort_size() != k {
            return Err(Error::InvalidInput("score rows differ in cohort size".into()));
        }
        push_trial(&mut s, &r.trial)?;
        write!(s, ",{:?},{:?}", r.scores.claimed, r.scores.ubm).unwrap();
        for c in &r.scores.cohort {
            write!(s, ",{c:?}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn score_table_from_csv(text: &str, source: &str) -> Result<Vec<ScoreRow>> {
    let (header, rows) = table_rows(
        text,
        source,
        &["utterance_id", "claimed_speaker", "label", "s_claimed", "s_ubm"],
    )?;
    if header.len() < 6 {
        return Err(line_err(source, 1, "score tables need at least one cohort column"));
    }
    rows.iter()
        .map(|(line, cells)| {
            let trial = trial_from_cells(cells, source, *line)?;
            let nums = cells[3..]
                .iter()
                .map(|c| parse_f64(c, source, *line))
                .collect::<Result<Vec<_>>>()?;
            let scores = ScoreVector::new(nums[0], nums[1], nums[2..].to_vec())
                .map_err(|e| line_err(source, *line, e.to_string()))?;
            Ok(ScoreRow { trial, scores })
        })
        .collect()
}

/// One assembled feature row with its trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub trial: TrialRecord,
    pub values: Vec<f64>,
}

/// Trial columns followed by `columns`, e.g. from [`Condition::column_names`].
pub fn feature_table_to_csv(columns: &[String], rows: &[FeatureRow]) -> Result<String> {
    if columns.is_empty() || columns.iter().any(|c| check_id(c).is_err()) {
        return Err(Error::InvalidInput("bad feature column names".into()));
    }
    let mut s = format!("{TRIAL_HEADER},{}\n", columns.join(","));
    for r in rows {
        if r.values.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "rows need {} values, got {}",
                columns.len(),
                r.values.len()
            )));
        }
        push_trial(&mut s, &r.trial)?;
        for v in &r.values {
            write!(s, ",{v:?}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn feature_table_from_csv(text: &str, source: &str) -> Result<Vec<FeatureRow>> {
    let (header, rows) = table_rows(text, source, &["utterance_id", "claimed_speaker", "label"])?;
    if header.len() < 4 {
        return Err(line_err(source, 1, "feature tables need at least one value column"));
    }
    rows.iter()
        .map(|(line, cells)| {
            Ok(FeatureRow {
                trial: trial_from_cells(cells, source, *line)?,
                values: cells[3..]
                    .iter()
                    .map(|c| parse_f64(c, source, *line))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

// ---- models -----------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmRecord {
    components: usize,
    dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GmmRecord {
    fn from_gmm(g: &DiagGmm) -> Self {
        let m = g.components();
        Self {
            components: m,
            dim: g.dim(),
            weights: g.weights().to_vec(),
            means: (0..m).map(|i| g.mean(i).to_vec()).collect(),
            variances: (0..m).map(|i| g.variance(i).to_vec()).collect(),
        }
    }

    fn into_gmm(self) -> Result<DiagGmm> {
        if self.weights.len() != self.components
            || self.means.len() != self.components
            || self.means.iter().chain(&self.variances).any(|r| r.len() != self.dim)
        {
            return Err(Error::InvalidInput(format!(
                "mixture arrays do not match declared shape {}x{}",
                self.components, self.dim
            )));
        }
        DiagGmm::new(self.weights, self.means, self.variances)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeakerRecord {
    id: String,
    gmm: GmmRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Payload {
    DiagGmm(GmmRecord),
    SpeakerModels {
        ubm_ref: String,
        count: usize,
        speakers: Vec<SpeakerRecord>,
    },
    Cohort {
        size: usize,
        cost: f64,
        members: Vec<String>,
        labels: Vec<usize>,
        centroids: Vec<GmmRecord>,
    },
    LinearSvm(LinearSvmModel),
    Mlp(MlpModel),
    EvalReport(EvalReport),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Envelope {
    format_version: u32,
    #[serde(flatten)]
    payload: Payload,
}

fn to_json(payload: Payload) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope {
        format_version: FORMAT_VERSION,
        payload,
    })
    .expect("model payloads serialize");
    s.push('\n');
    s
}

fn from_json(text: &str, source: &str) -> Result<Payload> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| {
        parse_err(
            source,
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if env.format_version != FORMAT_VERSION {
        return Err(parse_err(
            source,
            "line 1".into(),
            format!("unsupported format_version {}", env.format_version),
        ));
    }
    Ok(env.payload)
}

fn wrong_kind(source: &str, want: &str) -> Error {
    parse_err(source, "line 1".into(), format!("file does not hold a {want}"))
}

fn shape_err(source: &str, e: Error) -> Error {
    parse_err(source, "line 1".into(), e.to_string())
}

pub fn gmm_to_json(g: &DiagGmm) -> String {
    to_json(Payload::DiagGmm(GmmRecord::from_gmm(g)))
}

pub fn gmm_from_json(text: &str, source: &str) -> Result<DiagGmm> {
    match from_json(text, source)? {
        Payload::DiagGmm(r) => r.into_gmm().map_err(|e| shape_err(source, e)),
        _ => Err(wrong_kind(source, "diag_gmm")),
    }
}

pub fn speaker_models_to_json(models: &[(String, SpeakerModel)]) -> String {
    let ubm_ref = models.first().map(|(_, m)| m.ubm_ref.clone()).unwrap_or_default();
    to_json(Payload::SpeakerModels {
        ubm_ref,
        count: models.len(),
        speakers: models
            .iter()
            .map(|(id, m)| SpeakerRecord {
                id: id.clone(),
                gmm: GmmRecord::from_gmm(&m.gmm),
            })
            .collect(),
    })
}

/// Loads speaker models and checks they were adapted from `ubm`.
pub fn speaker_models_from_json(text: &str, source: &str, ubm: &DiagGmm) -> Result<Vec<(String, SpeakerModel)>> {
    let Payload::SpeakerModels {
        ubm_ref,
        count,
        speakers,
    } = from_json(text, source)?
    else {
        return Err(wrong_kind(source, "speaker_models"));
    };
    if count != speakers.len() {
        return Err(shape_err(source, Error::InvalidInput(format!("count {count} but {} speakers", speakers.len()))));
    }
    if ubm_ref != ubm.fingerprint() {
        return Err(parse_err(source, "line 1".into(), "speaker models were adapted from a different UBM"));
    }
    speakers
        .into_iter()
        .map(|r| {
            let gmm = r.gmm.into_gmm().map_err(|e| shape_err(source, e))?;
            let model = SpeakerModel::from_parts(gmm, ubm).map_err(|e| shape_err(source, e))?;
            Ok((r.id, model))
        })
        .collect()
}

pub fn cohort_to_json(cohort: &Cohort, assignment: &ClusterAssignment, members: &[String]) -> String {
    to_json(Payload::Cohort {
        size: cohort.size(),
        cost: assignment.cost,
        members: members.to_vec(),
        labels: assignment.labels.clone(),
        centroids: cohort.centroids.iter().map(GmmRecord::from_gmm).collect(),
    })
}

pub fn cohort_from_json(text: &str, source: &str) -> Result<(Cohort, ClusterAssignment, Vec<String>)> {
    let Payload::Cohort {
        size,
        cost,
        members,
        labels,
        centroids,
    } = from_json(text, source)?
    else {
        return Err(wrong_kind(source, "cohort"));
    };
    let centroids = centroids
        .into_iter()
        .map(GmmRecord::into_gmm)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| shape_err(source, e))?;
    if centroids.len() != size || size == 0 || members.len() != labels.len() || labels.iter().any(|l| *l >= size) {
        return Err(shape_err(source, Error::InvalidInput("inconsistent cohort shape".into())));
    }
    if centroids.iter().any(|c| !c.shares_structure(&centroids[0])) {
        return Err(shape_err(source, Error::InvalidInput("cohort centroids differ in weights/variances".into())));
    }
    Ok((Cohort { centroids }, ClusterAssignment { labels, cost }, members))
}

pub fn decider_to_json(model: &DecisionModel) -> String {
    match model {
        DecisionModel::Svm(m) => to_json(Payload::LinearSvm(m.clone())),
        DecisionModel::Mlp(m) => to_json(Payload::Mlp(m.clone())),
    }
}

pub fn decider_from_json(text: &str, source: &str) -> Result<DecisionModel> {
    let model = match from_json(text, source)? {
        Payload::LinearSvm(m) => {
            m.validate().map_err(|e| shape_err(source, e))?;
            DecisionModel::Svm(m)
        }
        Payload::Mlp(m) => {
            m.validate().map_err(|e| shape_err(source, e))?;
            DecisionModel::Mlp(m)
        }
        _ => return Err(wrong_kind(source, "linear_svm or mlp model")),
    };
    Ok(model)
}

pub fn report_to_json(r: &EvalReport) -> String {
    to_json(Payload::EvalReport(r.clone()))
}

pub fn report_from_json(text: &str, source: &str) -> Result<EvalReport> {
    match from_json(text, source)? {
        Payload::EvalReport(r) => Ok(r),
        _ => Err(wrong_kind(source, "eval_report")),
    }
}
