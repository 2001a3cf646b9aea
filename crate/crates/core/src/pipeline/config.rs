use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cohort::{KlForm, KmeansOptions, DEFAULT_COHORT_SIZE, DEFAULT_KMEANS_ITERATIONS, DEFAULT_RESTARTS};
use crate::decision::{MlpConfig, SvmConfig};
use crate::error::{Error, Result};
use crate::features::{CohortScoring, Condition};
use crate::gmm::{EmOptions, DEFAULT_EM_ITERATIONS, DEFAULT_FLOOR_RATIO, DEFAULT_RELEVANCE};
use crate::synth::SynthConfig;

/// The bundled default configuration, every key documented.
pub const DEFAULT_CONFIG_TOML: &str = include_str!("../../configs/default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeciderKind {
    Svm,
    Mlp,
}

impl fmt::Display for DeciderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeciderKind::Svm => "svm",
            DeciderKind::Mlp => "mlp",
        })
    }
}

impl FromStr for DeciderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svm" => Ok(DeciderKind::Svm),
            "mlp" => Ok(DeciderKind::Mlp),
            other => Err(Error::Config(format!("unknown decider {other:?}, expected svm or mlp"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmSection {
    pub components: usize,
    pub iterations: usize,
    pub min_gain: f64,
    pub floor_ratio: f64,
    pub relevance: f64,
}

impl Default for GmmSection {
    fn default() -> Self {
        Self {
            components: 32,
            iterations: DEFAULT_EM_ITERATIONS,
            min_gain: 1e-6,
            floor_ratio: DEFAULT_FLOOR_RATIO,
            relevance: DEFAULT_RELEVANCE,
        }
    }
}

impl GmmSection {
    pub fn em_options(&self) -> EmOptions {
        EmOptions {
            iterations: self.iterations,
            min_gain: self.min_gain,
            floor_ratio: self.floor_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSection {
    pub size: usize,
    pub iterations: usize,
    pub restarts: usize,
    /// "symmetric" or "difference".
    pub kl_form: String,
    pub cost_curve_max: usize,
}

impl Default for CohortSection {
    fn default() -> Self {
        Self {
            size: DEFAULT_COHORT_SIZE,
            iterations: DEFAULT_KMEANS_ITERATIONS,
            restarts: DEFAULT_RESTARTS,
            kl_form: "symmetric".into(),
            cost_curve_max: 20,
        }
    }
}

impl CohortSection {
    pub fn kmeans_options(&self) -> Result<KmeansOptions> {
        Ok(KmeansOptions {
            iterations: self.iterations,
            restarts: self.restarts,
            form: self.kl_form.parse::<KlForm>().map_err(|e| Error::Config(e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    /// "raw" or "ubm-relative".
    pub cohort_scoring: String,
}

impl Default for FeatureSection {
    fn default() -> Self {
        Self {
            cohort_scoring: "raw".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    /// Master seed; the corpus uses it directly, every other stage a seed
    /// derived from it and the stage name.
    pub seed: u64,
    /// Fraction of enrolled speakers in the development set.
    pub dev_fraction: f64,
    /// Condition for single-stage `train-decider` / `evaluate` runs.
    pub condition: String,
    /// Deciders `run-all` trains and evaluates.
    pub deciders: Vec<DeciderKind>,
    /// Output directory; `--out` overrides.
    pub work_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 42,
            dev_fraction: 0.5,
            condition: "C3".into(),
            deciders: vec![DeciderKind::Svm, DeciderKind::Mlp],
            work_dir: PathBuf::from("runs/default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub synth: SynthConfig,
    pub gmm: GmmSection,
    pub cohort: CohortSection,
    pub features: FeatureSection,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|s| format!("line {}", text[..s.start].lines().count().max(1)))
                .unwrap_or_else(|| "unknown location".into());
            Error::Parse {
                source_name: source.to_string(),
                location,
                message: e.message().to_string(),
            }
        })?;
        cfg.synth.seed = cfg.experiment.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&crate::io::read_text(path)?, &path.display().to_string())
    }

    pub fn bundled() -> Self {
        Self::from_toml(DEFAULT_CONFIG_TOML, "configs/default.toml").expect("bundled config is valid")
    }

    /// Sets the master seed (and the corpus seed with it).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.experiment.seed = seed;
        self.synth.seed = seed;
        self
    }

    pub fn condition(&self) -> Result<Condition> {
        self.experiment
            .condition
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))
    }

    pub fn cohort_scoring(&self) -> Result<CohortScoring> {
        self.features
            .cohort_scoring
            .parse()
            .map_err(|e: Error| Error::Config(e.to_string()))
    }

    /// Number of enrolled speakers in the development set.
    pub fn dev_speakers(&self) -> usize {
        ((self.synth.n_speakers as f64) * self.experiment.dev_fraction).round() as usize
    }

    /// Deterministic per-stage seed.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = self.experiment.seed ^ 0x9e37_79b9_7f4a_7c15;
        for b in stage.bytes() {
            h = splitmix(h ^ u64::from(b));
        }
        h
    }

    // `!(x > 0.0)` also rejects NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        self.synth.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.condition()?;
        self.cohort_scoring()?;
        self.cohort.kmeans_options()?;
        if !(self.experiment.dev_fraction > 0.0 && self.experiment.dev_fraction < 1.0) {
            return cfg_err("experiment.dev_fraction must lie strictly between 0 and 1".into());
        }
        let dev = self.dev_speakers();
        let eval = self.synth.n_speakers.saturating_sub(dev);
        if dev < 2 || eval < 2 {
            return cfg_err(format!("split leaves {dev} dev and {eval} eval speakers; need at least 2 each"));
        }
        if self.cohort.size < 2 || self.cohort.size > dev {
            return cfg_err(format!(
                "cohort.size {} must lie in 2..={dev} (dev speakers)",
                self.cohort.size
            ));
        }
        if self.cohort.cost_curve_max == 0 || self.cohort.cost_curve_max > dev {
            return cfg_err(format!("cohort.cost_curve_max must lie in 1..={dev}"));
        }
        if self.cohort.iterations == 0 || self.cohort.restarts == 0 {
            return cfg_err("cohort.iterations and cohort.restarts must be positive".into());
        }
        let ubm_frames = self.synth.background_speakers * self.synth.frames_per_background_speaker;
        if self.gmm.components == 0 || self.gmm.components > ubm_frames {
            return cfg_err(format!("gmm.components must lie in 1..={ubm_frames}"));
        }
        if self.gmm.iterations == 0 {
            return cfg_err("gmm.iterations must be positive".into());
        }
        if !(self.gmm.relevance >= 0.0 && self.gmm.relevance.is_finite()) {
            return cfg_err("gmm.relevance must be >= 0".into());
        }
        if !(self.gmm.floor_ratio > 0.0) {
            return cfg_err("gmm.floor_ratio must be positive".into());
        }
        if self.experiment.deciders.is_empty() {
            return cfg_err("experiment.deciders must name at least one decider".into());
        }
        if !(self.svm.regularization > 0.0) || self.svm.epochs == 0 {
            return cfg_err("svm.regularization and svm.epochs must be positive".into());
        }
        if !(self.mlp.learning_rate > 0.0) || self.mlp.epochs == 0 || self.mlp.batch_size == 0 {
            return cfg_err("mlp.learning_rate, mlp.epochs and mlp.batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.mlp.momentum) {
            return cfg_err("mlp.momentum must lie in [0, 1)".into());
        }
        Ok(())
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
