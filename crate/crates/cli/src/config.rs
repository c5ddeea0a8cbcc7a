//! Run configuration. Every field has a default, so `{}` is a valid config.

use std::fs;
use std::path::{Path, PathBuf};

use pts_core::align::Metric;
use pts_core::corpus::DEFAULT_PAGE_LIMIT;
use pts_core::distill::{ProvisionalMode, StudentSource, DEFAULT_LAMBDA};
use pts_core::embed::Backend;
use pts_core::synth::SynthSpec;
use pts_core::toymodel::{GradCheckOptions, ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const WORKDIR_ENV: &str = "PTS_WORKDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the synth, model, train and gradcheck seeds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Read at most this many corpus lines.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    /// Page size L in tokens (1024, the page size used with BART).
    pub page_limit: usize,
    pub paths: PathsConfig,
    pub synth: SynthSpec,
    pub embedder: EmbedderConfig,
    pub alignment: AlignmentConfig,
    pub teacher: TeacherConfig,
    pub student: StudentConfig,
    /// Weight of the distillation term (0.1).
    pub lambda: f64,
    pub model: ModelSettings,
    pub train: TrainSettings,
    pub split: SplitConfig,
    pub summarize: SummarizeConfig,
    pub gradcheck: GradCheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            limit: None,
            page_limit: DEFAULT_PAGE_LIMIT,
            paths: PathsConfig::default(),
            synth: SynthSpec::default(),
            embedder: EmbedderConfig::default(),
            alignment: AlignmentConfig::default(),
            teacher: TeacherConfig::default(),
            student: StudentConfig::default(),
            lambda: DEFAULT_LAMBDA,
            model: ModelSettings::default(),
            train: TrainSettings::default(),
            split: SplitConfig::default(),
            summarize: SummarizeConfig::default(),
            gradcheck: GradCheckConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Where every artifact is written. `PTS_WORKDIR` overrides it.
    pub workdir: PathBuf,
    /// Raw corpus JSONL; defaults to `<workdir>/corpus.jsonl`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    /// Vector table for the external embedder backend.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("pts-work"),
            corpus: None,
            embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub backend: Backend,
    /// Hash width for `hashed-bow`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Tfidf,
            dim: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Metric whose alignment feeds the teacher and training.
    pub metric: Metric,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            metric: Metric::EmbedCosine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub mode: ProvisionalMode,
    /// Sentences per provisional page summary in `extractive-topk` mode.
    pub k: usize,
    pub temperature: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            mode: ProvisionalMode::ExtractiveTopk,
            k: 3,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentConfig {
    pub source: StudentSource,
    /// Smoothing of the sentence-count student.
    pub epsilon: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            source: StudentSource::ConfidenceHead,
            epsilon: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_pages: usize,
    pub max_target_len: usize,
    pub init_scale: f64,
    pub seed: u64,
    /// Vocabulary cap including reserved tokens; `None` keeps every token.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_vocab: Option<usize>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            max_pages: m.max_pages,
            max_target_len: m.max_target_len,
            init_scale: m.init_scale,
            seed: m.seed,
            max_vocab: None,
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            max_pages: self.max_pages,
            max_target_len: self.max_target_len,
            seed: self.seed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Each page decodes the summary sentences aligned to it.
    Aligned,
    /// Each page decodes the whole summary.
    FullSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationMetric {
    EmbedF1,
    Rouge1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    /// 1e-3 for the toy model; 2e-3 was used with BART.
    pub learning_rate: f64,
    /// Three documents per batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub grad_clip: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub min_delta: f64,
    /// `None` validates once per epoch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_every_steps: Option<usize>,
    pub validation_metric: ValidationMetric,
    pub targets: TargetMode,
    pub record_wall_time: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            grad_clip: t.grad_clip,
            seed: t.seed,
            shuffle: t.shuffle,
            patience: t.patience,
            min_delta: t.min_delta,
            eval_every_steps: t.eval_every_steps,
            validation_metric: ValidationMetric::EmbedF1,
            targets: TargetMode::Aligned,
            record_wall_time: false,
        }
    }
}

/// Documents are split in corpus order: training first, then validation,
/// then test. Explicit counts win over fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub validation_fraction: f64,
    pub test_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation_docs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_docs: Option<usize>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.1,
            test_fraction: 0.1,
            validation_docs: None,
            test_docs: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitConfig {
    pub fn sizes(&self, n: usize) -> Result<SplitSizes> {
        let count = |explicit: Option<usize>, fraction: f64| {
            explicit.unwrap_or((n as f64 * fraction).floor() as usize)
        };
        let validation = count(self.validation_docs, self.validation_fraction);
        let test = count(self.test_docs, self.test_fraction);
        if validation + test >= n {
            return Err(CliError::Invalid(format!(
                "split of {n} documents leaves no training data ({validation} validation, {test} test)"
            )));
        }
        Ok(SplitSizes {
            train: n - validation - test,
            validation,
            test,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    pub max_len: usize,
    /// Refuse to summarize when more of the page tokens than this are
    /// unknown to the checkpoint vocabulary.
    pub max_oov_rate: f64,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            max_len: 64,
            max_oov_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    pub h: f64,
    pub samples: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        let g = GradCheckOptions::default();
        Self {
            h: g.h,
            samples: g.samples,
            seed: g.seed,
            lambdas: vec![0.0, 0.1, 1.0],
            tolerance: 1e-4,
        }
    }
}

impl RunConfig {
    /// Reads a config file, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
    }

    /// Applies the top-level seed and the workdir environment override.
    pub fn resolve(mut self, workdir_env: Option<PathBuf>) -> Result<Self> {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.model.seed = seed;
            self.train.seed = seed;
            self.gradcheck.seed = seed;
        }
        if let Some(dir) = workdir_env {
            self.paths.workdir = dir;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Invalid(m));
        if self.page_limit == 0 {
            return bad("page_limit must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.teacher.temperature > 0.0 && self.teacher.temperature.is_finite()) {
            return bad("teacher.temperature must be > 0".into());
        }
        if self.teacher.k == 0 {
            return bad("teacher.k must be >= 1".into());
        }
        if !(self.student.epsilon >= 0.0 && self.student.epsilon.is_finite()) {
            return bad("student.epsilon must be >= 0".into());
        }
        if self.model.max_target_len < 2 {
            return bad("model.max_target_len must be >= 2".into());
        }
        self.model.model_config(5).validate()?;
        self.train_config().validate()?;
        for f in [self.split.validation_fraction, self.split.test_fraction] {
            if !(0.0..1.0).contains(&f) {
                return bad(format!("split fractions must lie in [0, 1), got {f}"));
            }
        }
        if self.summarize.max_len == 0 {
            return bad("summarize.max_len must be >= 1".into());
        }
        if self.gradcheck.lambdas.is_empty() {
            return bad("gradcheck.lambdas must not be empty".into());
        }
        if self.embedder.backend == Backend::External && self.paths.embeddings.is_none() {
            return bad("the external embedder needs paths.embeddings".into());
        }
        Ok(())
    }

    pub fn workdir(&self) -> &Path {
        &self.paths.workdir
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.paths
            .corpus
            .clone()
            .unwrap_or_else(|| self.paths.workdir.join("corpus.jsonl"))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lambda: self.lambda,
            student_source: self.student.source,
            grad_clip: t.grad_clip,
            seed: t.seed,
            shuffle: t.shuffle,
            patience: t.patience,
            min_delta: t.min_delta,
            eval_every_steps: t.eval_every_steps,
            max_summary_len: self.summarize.max_len,
            record_wall_time: t.record_wall_time,
        }
    }

    pub fn gradcheck_options(&self) -> GradCheckOptions {
        GradCheckOptions {
            h: self.gradcheck.h,
            samples: self.gradcheck.samples,
            seed: self.gradcheck.seed,
            corrupt_gradient: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_the_default() {
        let c: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.page_limit, 1024);
        assert_eq!(c.lambda, 0.1);
    }

    #[test]
    fn unknown_field_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lamda": 0.2}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig {
            seed: Some(3),
            ..RunConfig::default()
        };
        c.train.eval_every_steps = Some(25);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn seed_overrides_sub_seeds() {
        let c = RunConfig {
            seed: Some(9),
            ..RunConfig::default()
        }
        .resolve(Some("elsewhere".into()))
        .unwrap();
        assert_eq!(
            (c.synth.seed, c.model.seed, c.train.seed, c.gradcheck.seed),
            (9, 9, 9, 9)
        );
        assert_eq!(c.workdir(), Path::new("elsewhere"));
    }

    #[test]
    fn lambda_out_of_range() {
        let c = RunConfig {
            lambda: 1.5,
            ..RunConfig::default()
        };
        assert!(matches!(c.resolve(None), Err(CliError::Invalid(_))));
    }

    #[test]
    fn split_sizes() {
        let s = SplitConfig::default().sizes(100).unwrap();
        assert_eq!((s.train, s.validation, s.test), (80, 10, 10));
        let s = SplitConfig {
            validation_docs: Some(20),
            test_docs: Some(50),
            ..SplitConfig::default()
        }
        .sizes(270)
        .unwrap();
        assert_eq!((s.train, s.validation, s.test), (200, 20, 50));
        assert!(SplitConfig {
            test_docs: Some(3),
            ..SplitConfig::default()
        }
        .sizes(3)
        .is_err());
    }
}
