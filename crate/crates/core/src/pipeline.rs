//! End-to-end commands: train, classify, explain and evaluate, driven by one
//! declarative configuration file.
//!
//! Articles are processed on a bounded worker pool, but every output file is
//! written in input order, so runs with the same inputs and seed are
//! byte-identical regardless of scheduling.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, Candidate, ClassifierError, ClassifierModel, FocalLossParams, TrainingConfig};
use crate::corpus::{
    self, format_label_list, list_article_files, parse_label_list, read_label_file, Article, CorpusError, GoldAnnotation,
    Language,
};
use crate::embedding::{build_embedder, EmbedError, Embedder, EmbedderConfig};
use crate::evaluation::{
    compare_runs, generation_report, Averaging, ComparisonTable, EvalError, GenerationReport,
};
use crate::llm::{
    assign_subnarratives, build_chat_backend, build_react_prompt, build_stage1_prompt, generate_explanation,
    refine_narratives, ChatBackend, ChatBackendConfig, Explanation, LlmError, MockScript,
};
use crate::retrieval::{index_article, retrieve_dual_pass, IndexState, RetrievalConfig, RetrievalError};
use crate::taxonomy::{Domain, Taxonomy, TaxonomyError, OTHER_LABEL};

pub const TRAINING_SUMMARY_FILE: &str = "training_summary.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("taxonomy {path}: {source}")]
    Taxonomy {
        path: String,
        #[source]
        source: TaxonomyError,
    },
    #[error("{context}: {source}")]
    Classifier {
        context: String,
        #[source]
        source: ClassifierError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no trained model found in {0}")]
    NoModels(String),
    #[error("no articles found in {0}")]
    NoArticles(String),
    #[error("no annotated articles in either domain")]
    NothingToTrain,
    #[error("{path}: no entry for {filename}")]
    Missing { path: String, filename: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub taxonomy_cc: PathBuf,
    pub taxonomy_urw: PathBuf,
    /// Directory of `<filename>.txt` articles.
    pub articles: PathBuf,
    /// Gold label file used for training.
    pub annotations: PathBuf,
    /// Where model files and the training summary are written.
    pub models: PathBuf,
    /// Default directory for predictions, explanations and reports.
    pub outputs: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub averaging: Averaging,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub chat: ChatBackendConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub loss: FocalLossParams,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Maximum number of articles processed concurrently.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Language assumed for article files without a language prefix.
    #[serde(default = "default_language")]
    pub default_language: Language,
    /// Deterministic embedder and offline chat backend; no network access.
    #[serde(default)]
    pub offline: bool,
}

fn default_parallelism() -> usize {
    4
}

fn default_language() -> Language {
    Language::En
}

impl PipelineConfig {
    /// Parses a TOML config. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path, origin: &str) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base, &path.display().to_string())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for path in [
            &mut p.taxonomy_cc,
            &mut p.taxonomy_urw,
            &mut p.articles,
            &mut p.annotations,
            &mut p.models,
            &mut p.outputs,
        ] {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(script) = self.chat.mock_script.as_mut() {
            if script.is_relative() {
                *script = base.join(&*script);
            }
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.parallelism == 0 {
            return Err(PipelineError::Invalid("parallelism must be >= 1".into()));
        }
        self.embedder.validate()?;
        self.chat.validate()?;
        self.training
            .validate()
            .and_then(|_| self.loss.validate())
            .map_err(|source| PipelineError::Classifier {
                context: "config".into(),
                source,
            })?;
        if self.retrieval.top_k == 0 {
            return Err(PipelineError::Invalid("retrieval.top_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn model_path(&self, domain: Domain) -> PathBuf {
        self.paths.models.join(format!("model_{}.json", domain.as_str().to_lowercase()))
    }
}

/// Loaded taxonomies and backends shared read-only by every article task.
pub struct Pipeline {
    pub config: PipelineConfig,
    taxonomy_cc: Taxonomy,
    taxonomy_urw: Taxonomy,
    embedder: Box<dyn Embedder>,
    chat: Option<Box<dyn ChatBackend>>,
}

impl Pipeline {
    /// Loads both taxonomies and builds the embedder; the chat backend is built
    /// on first use.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let embedder = build_embedder(&config.embedder, config.offline)?;
        Self::with_embedder(config, embedder)
    }

    pub fn with_embedder(config: PipelineConfig, embedder: Box<dyn Embedder>) -> Result<Self, PipelineError> {
        let load = |path: &Path, domain| {
            Taxonomy::load(path, domain).map_err(|source| PipelineError::Taxonomy {
                path: path.display().to_string(),
                source,
            })
        };
        let taxonomy_cc = load(&config.paths.taxonomy_cc, Domain::Cc)?;
        let taxonomy_urw = load(&config.paths.taxonomy_urw, Domain::Urw)?;
        Ok(Pipeline {
            config,
            taxonomy_cc,
            taxonomy_urw,
            embedder,
            chat: None,
        })
    }

    /// Replaces the configured chat backend, e.g. with an in-memory script.
    pub fn set_chat_backend(&mut self, backend: Box<dyn ChatBackend>) {
        self.chat = Some(backend);
    }

    pub fn taxonomy(&self, domain: Domain) -> &Taxonomy {
        match domain {
            Domain::Cc => &self.taxonomy_cc,
            Domain::Urw => &self.taxonomy_urw,
        }
    }

    pub fn embedder(&self) -> &dyn Embedder {
        self.embedder.as_ref()
    }

    fn ensure_chat(&mut self) -> Result<(), PipelineError> {
        if self.chat.is_none() {
            self.chat = Some(build_chat_backend(&self.config.chat, self.config.offline)?);
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| PipelineError::Invalid(format!("worker pool: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainStatus {
    Trained,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain: Domain,
    pub status: DomainStatus,
    pub articles: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    pub n_train: usize,
    pub n_val: usize,
    pub steps: usize,
    pub loss_curve: Vec<f64>,
    /// `(label, threshold, validation F-beta at that threshold)`.
    pub thresholds: Vec<(String, f64, f64)>,
    pub validation_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub embedder: String,
    pub domains: Vec<DomainSummary>,
    /// Gold labels that do not fit their taxonomy, as `article: problem`.
    pub annotation_issues: Vec<String>,
    /// Annotated articles whose domain could not be inferred from their labels.
    pub unassigned_articles: Vec<String>,
}

impl TrainSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

/// Per-article failure, written to the errors sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArticleFailure {
    pub filename: String,
    pub error: String,
}

/// `predictions.tsv` → `predictions.errors.tsv`.
pub fn errors_sidecar(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.errors.tsv"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

fn write_sidecar(output: &Path, failures: &[ArticleFailure]) -> Result<PathBuf, PipelineError> {
    let path = errors_sidecar(output);
    let body: String = failures
        .iter()
        .map(|f| format!("{}\t{}\n", f.filename, one_line(&f.error)))
        .collect();
    write_file(&path, &body)?;
    Ok(path)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl Pipeline {
    /// Trains one classifier per domain that has annotated articles.
    pub fn run_train(&self) -> Result<TrainSummary, PipelineError> {
        let paths = &self.config.paths;
        if !paths.articles.is_dir() {
            return Err(PipelineError::NoArticles(paths.articles.display().to_string()));
        }
        let dataset = corpus::load_corpus(
            &paths.articles,
            &paths.annotations,
            &self.taxonomy_cc,
            &self.taxonomy_urw,
            self.config.default_language,
        )?;
        if dataset.is_empty() {
            return Err(PipelineError::NothingToTrain);
        }
        let cfg = &self.config.training;
        let mut summary = TrainSummary {
            seed: cfg.seed,
            embedder: self.embedder.identity(),
            domains: Vec::new(),
            annotation_issues: dataset
                .issues
                .iter()
                .map(|i| format!("{}: {}", i.article_id, i.violation))
                .collect(),
            unassigned_articles: dataset
                .items
                .iter()
                .filter(|i| i.article.domain.is_none())
                .map(|i| i.article.filename.clone())
                .collect(),
        };
        for domain in [Domain::Cc, Domain::Urw] {
            let subset = dataset.of_domain(domain);
            if subset.is_empty() {
                tracing::warn!(%domain, "no annotated articles; skipping this domain");
                summary.domains.push(DomainSummary {
                    domain,
                    status: DomainStatus::Skipped,
                    articles: 0,
                    model_path: None,
                    n_train: 0,
                    n_val: 0,
                    steps: 0,
                    loss_curve: Vec::new(),
                    thresholds: Vec::new(),
                    validation_f1: None,
                });
                continue;
            }
            let context = |what: &str| format!("{what} {domain} classifier");
            let (train_set, val_set) = corpus::split(&subset, cfg.split_ratio, cfg.seed)?;
            let outcome = classifier::train(
                &train_set,
                &val_set,
                self.embedder.as_ref(),
                self.taxonomy(domain),
                cfg,
                &self.config.loss,
            )
            .map_err(|source| PipelineError::Classifier {
                context: context("training"),
                source,
            })?;
            let path = self.config.model_path(domain);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            outcome.model.save(&path).map_err(|source| PipelineError::Classifier {
                context: context("saving"),
                source,
            })?;
            tracing::info!(%domain, path = %path.display(), "model written");
            let model = &outcome.model;
            summary.domains.push(DomainSummary {
                domain,
                status: DomainStatus::Trained,
                articles: subset.len(),
                model_path: Some(path),
                n_train: outcome.n_train,
                n_val: outcome.n_val,
                steps: outcome.steps,
                thresholds: model
                    .vocab
                    .iter()
                    .zip(&model.thresholds.thresholds)
                    .zip(&outcome.threshold_scores)
                    .map(|((l, t), s)| (l.clone(), *t, *s))
                    .collect(),
                loss_curve: outcome.loss_curve,
                validation_f1: outcome.validation_f1,
            });
        }
        write_file(&paths.models.join(TRAINING_SUMMARY_FILE), &summary.to_json())?;
        Ok(summary)
    }

    /// Models found in the models directory, in domain order.
    pub fn load_models(&self) -> Result<Vec<ClassifierModel>, PipelineError> {
        let mut models = Vec::new();
        for domain in [Domain::Cc, Domain::Urw] {
            let path = self.config.model_path(domain);
            if !path.exists() {
                continue;
            }
            let model = ClassifierModel::load(&path).map_err(|source| PipelineError::Classifier {
                context: format!("loading {}", path.display()),
                source,
            })?;
            model
                .ensure_embedder(self.embedder.as_ref())
                .map_err(|source| PipelineError::Classifier {
                    context: format!("loading {}", path.display()),
                    source,
                })?;
            models.push(model);
        }
        if models.is_empty() {
            return Err(PipelineError::NoModels(self.config.paths.models.display().to_string()));
        }
        Ok(models)
    }
}

/// Stage-1 trace for one domain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRefinement {
    pub domain: Domain,
    pub candidates: Vec<Candidate>,
    pub refined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub filename: String,
    pub stages: Vec<DomainRefinement>,
    pub narratives: Vec<String>,
    pub subs: Vec<String>,
    pub retries_used: usize,
}

impl Classification {
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.filename,
            format_label_list(&self.narratives),
            format_label_list(&self.subs)
        )
    }

    pub fn to_annotation(&self) -> GoldAnnotation {
        GoldAnnotation::new(&self.filename, self.narratives.clone(), self.subs.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    /// Input order; failed articles are absent.
    pub classifications: Vec<Classification>,
    pub failures: Vec<ArticleFailure>,
    pub output: PathBuf,
    pub errors_file: PathBuf,
}

impl ClassifyOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

fn failure_name(path: &Path) -> String {
    path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Pipeline {
    /// Classifies every `*.txt` article in `articles_dir` and writes one
    /// `<filename>\t<narratives>\t<subs>` line per article.
    pub fn run_classify(&mut self, articles_dir: &Path, output: &Path) -> Result<ClassifyOutcome, PipelineError> {
        let models = self.load_models()?;
        let files = list_article_files(articles_dir)?;
        if files.is_empty() {
            return Err(PipelineError::NoArticles(articles_dir.display().to_string()));
        }
        self.ensure_chat()?;
        let pool = self.pool()?;
        let this = &*self;
        let results: Vec<Result<Classification, ArticleFailure>> = pool.install(|| {
            files
                .par_iter()
                .map(|path| {
                    this.classify_file(path, &models).map_err(|e| ArticleFailure {
                        filename: failure_name(path),
                        error: e.to_string(),
                    })
                })
                .collect()
        });
        let (mut classifications, mut failures) = (Vec::new(), Vec::new());
        for r in results {
            match r {
                Ok(c) => classifications.push(c),
                Err(f) => {
                    tracing::warn!(article = %f.filename, error = %f.error, "classification failed");
                    failures.push(f)
                }
            }
        }
        let body: String = classifications.iter().map(|c| c.to_line() + "\n").collect();
        write_file(output, &body)?;
        let errors_file = write_sidecar(output, &failures)?;
        Ok(ClassifyOutcome {
            classifications,
            failures,
            output: output.to_path_buf(),
            errors_file,
        })
    }

    fn classify_file(&self, path: &Path, models: &[ClassifierModel]) -> Result<Classification, PipelineError> {
        let article = Article::read(path, self.config.default_language)?;
        self.classify_article(&article, models)
    }

    /// Candidate generation per domain model, filter-only refinement, then
    /// sub-narrative assignment scoped to each confirmed narrative.
    pub fn classify_article(
        &self,
        article: &Article,
        models: &[ClassifierModel],
    ) -> Result<Classification, PipelineError> {
        let chat = self
            .chat
            .as_deref()
            .ok_or_else(|| PipelineError::Invalid("chat backend not initialised".into()))?;
        let x = self.embedder.embed_one(&article.text)?;
        let mut stages = Vec::with_capacity(models.len());
        let mut retries_used = 0;
        for model in models {
            let candidates = model
                .candidate_labels(&x, self.config.training.fallback_k)
                .map_err(|source| PipelineError::Classifier {
                    context: format!("scoring {}", article.filename),
                    source,
                })?;
            let labels: Vec<&str> = candidates.iter().map(|c| c.label.as_str()).collect();
            let taxonomy = self.taxonomy(model.domain);
            let bundle = build_stage1_prompt(article, &labels, taxonomy)?;
            let reply = refine_narratives(chat, &bundle, &labels)?;
            retries_used += reply.retries_used;
            stages.push(DomainRefinement {
                domain: model.domain,
                candidates,
                refined: reply.labels,
            });
        }
        let mut narratives = Vec::new();
        let mut subs = Vec::new();
        for stage in stages.iter().filter(|s| !s.refined.is_empty()) {
            let taxonomy = self.taxonomy(stage.domain);
            let result = assign_subnarratives(chat, article, &stage.refined, taxonomy)?;
            let violations = taxonomy.validate_labelset(&result.narratives, &result.subs);
            if let Some(v) = violations.first() {
                return Err(PipelineError::Invalid(format!("label hierarchy violated: {v}")));
            }
            retries_used += result.retries_used;
            narratives.extend(result.narratives);
            subs.extend(result.subs);
        }
        if narratives.is_empty() {
            narratives.push(OTHER_LABEL.to_string());
            subs = vec![OTHER_LABEL.to_string()];
        }
        Ok(Classification {
            filename: article.filename.clone(),
            stages,
            narratives,
            subs,
            retries_used,
        })
    }
}

/// One line of the explanation input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplainRequest {
    pub filename: String,
    pub dominant: String,
    pub subs: Vec<String>,
}

/// Parses `<filename>\t<dominant narrative>[\t<subs>]` lines.
pub fn parse_explain_requests(text: &str, path: &str) -> Result<Vec<ExplainRequest>, PipelineError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| PipelineError::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(err(format!("expected 2 or 3 tab-separated fields, found {}", fields.len())));
        }
        let filename = fields[0].trim();
        let dominant = fields[1].trim();
        if filename.is_empty() || dominant.is_empty() {
            return Err(err("empty filename or dominant narrative".into()));
        }
        if !seen.insert(filename.to_string()) {
            return Err(err(format!("duplicate entry for {filename}")));
        }
        let subs = fields
            .get(2)
            .map(|f| parse_label_list(f))
            .unwrap_or_default()
            .into_iter()
            .filter(|s| s != OTHER_LABEL)
            .collect();
        out.push(ExplainRequest {
            filename: filename.to_string(),
            dominant: dominant.to_string(),
            subs,
        });
    }
    Ok(out)
}

/// Parses `<filename>\t<text>` lines (explanations and references).
pub fn parse_text_file(text: &str, path: &str) -> Result<Vec<(String, String)>, PipelineError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| PipelineError::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let (filename, body) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `<filename>\\t<text>`".into()))?;
        let filename = filename.trim();
        if filename.is_empty() {
            return Err(err("empty filename".into()));
        }
        if !seen.insert(filename.to_string()) {
            return Err(err(format!("duplicate entry for {filename}")));
        }
        out.push((filename.to_string(), one_line(body)));
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainRecord {
    pub filename: String,
    pub explanation: Option<Explanation>,
    pub error: Option<String>,
    /// Index state probed after the article finished; `None` if no index was built.
    pub index_state: Option<IndexState>,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainOutcome {
    /// Input order, including failed articles.
    pub records: Vec<ExplainRecord>,
    pub failures: Vec<ArticleFailure>,
    pub output: PathBuf,
    pub errors_file: PathBuf,
}

impl ExplainOutcome {
    pub fn all_succeeded(&self) -> bool {
        self.failures.is_empty()
    }
}

impl Pipeline {
    /// Writes one `<filename>\t<explanation>` line per successfully explained article.
    pub fn run_explain(
        &mut self,
        requests_file: &Path,
        articles_dir: &Path,
        output: &Path,
    ) -> Result<ExplainOutcome, PipelineError> {
        let requests = parse_explain_requests(&read_text(requests_file)?, &requests_file.display().to_string())?;
        if requests.is_empty() {
            return Err(PipelineError::NoArticles(requests_file.display().to_string()));
        }
        self.ensure_chat()?;
        let pool = self.pool()?;
        let this = &*self;
        let records: Vec<ExplainRecord> =
            pool.install(|| requests.par_iter().map(|r| this.explain_one(r, articles_dir)).collect());
        let mut body = String::new();
        let mut failures = Vec::new();
        for r in &records {
            match (&r.explanation, &r.error) {
                (Some(e), _) => body.push_str(&format!("{}\t{}\n", r.filename, e.text)),
                (None, error) => {
                    let error = error.clone().unwrap_or_default();
                    tracing::warn!(article = %r.filename, %error, "explanation failed");
                    failures.push(ArticleFailure {
                        filename: r.filename.clone(),
                        error,
                    });
                }
            }
        }
        write_file(output, &body)?;
        let errors_file = write_sidecar(output, &failures)?;
        Ok(ExplainOutcome {
            records,
            failures,
            output: output.to_path_buf(),
            errors_file,
        })
    }

    fn explain_one(&self, req: &ExplainRequest, articles_dir: &Path) -> ExplainRecord {
        let mut record = ExplainRecord {
            filename: req.filename.clone(),
            explanation: None,
            error: None,
            index_state: None,
            sentences: 0,
        };
        let fail = |mut record: ExplainRecord, e: PipelineError| {
            record.error = Some(e.to_string());
            record
        };
        let article = match Article::read(&articles_dir.join(&req.filename), self.config.default_language) {
            Ok(a) => a,
            Err(e) => return fail(record, e.into()),
        };
        let Some(domain) = Domain::of_label(&req.dominant) else {
            return fail(
                record,
                TaxonomyError::UnknownNarrative(req.dominant.clone()).into_pipeline("explanation input"),
            );
        };
        let taxonomy = self.taxonomy(domain);
        let mut index = match index_article(&article, self.embedder.as_ref()) {
            Ok(i) => i,
            Err(e) => return fail(record, retrieval_err(e)),
        };
        record.sentences = index.len();
        let result = self.explain_with_index(&index, &req.dominant, &req.subs, taxonomy);
        // the index never outlives its article, whatever the outcome
        if let Err(e) = index.drop_index() {
            tracing::error!(article = %req.filename, error = %e, "index drop failed");
        }
        record.index_state = Some(index.state());
        match result {
            Ok(e) => record.explanation = Some(e),
            Err(e) => record.error = Some(e.to_string()),
        }
        record
    }

    fn explain_with_index(
        &self,
        index: &crate::retrieval::SentenceIndex,
        dominant: &str,
        subs: &[String],
        taxonomy: &Taxonomy,
    ) -> Result<Explanation, PipelineError> {
        let chat = self
            .chat
            .as_deref()
            .ok_or_else(|| PipelineError::Invalid("chat backend not initialised".into()))?;
        let retrieved = retrieve_dual_pass(index, taxonomy, dominant, subs, self.embedder.as_ref(), &self.config.retrieval)
            .map_err(retrieval_err)?;
        let bundle = build_react_prompt(&retrieved.evidence, dominant, subs, taxonomy)?;
        Ok(generate_explanation(chat, &bundle)?)
    }
}

trait IntoPipeline {
    fn into_pipeline(self, context: &str) -> PipelineError;
}

impl IntoPipeline for TaxonomyError {
    fn into_pipeline(self, context: &str) -> PipelineError {
        PipelineError::Taxonomy {
            path: context.to_string(),
            source: self,
        }
    }
}

fn retrieval_err(e: RetrievalError) -> PipelineError {
    match e {
        RetrievalError::Embed(e) => PipelineError::Embed(e),
        RetrievalError::Taxonomy(e) => e.into_pipeline("retrieval"),
        other => PipelineError::Invalid(other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateOutcome {
    pub classification: ComparisonTable,
    pub generation: Option<GenerationReport>,
    pub files: Vec<PathBuf>,
}

/// Explanation and reference files, aligned by filename in reference order.
pub fn align_generation_pairs(
    explanations: &[(String, String)],
    references: &[(String, String)],
    explanations_path: &str,
    default_language: Language,
) -> Result<Vec<(Language, String, String)>, PipelineError> {
    let by_name: HashMap<&str, &str> = explanations.iter().map(|(f, t)| (f.as_str(), t.as_str())).collect();
    if explanations.len() != references.len() {
        return Err(EvalError::IdMismatch {
            run: explanations_path.to_string(),
            detail: format!("{} explanations vs {} references", explanations.len(), references.len()),
        }
        .into());
    }
    references
        .iter()
        .map(|(filename, reference)| {
            let cand = by_name.get(filename.as_str()).ok_or_else(|| PipelineError::Missing {
                path: explanations_path.to_string(),
                filename: filename.clone(),
            })?;
            Ok((
                Language::from_filename(filename).unwrap_or(default_language),
                cand.to_string(),
                reference.clone(),
            ))
        })
        .collect()
}

impl Pipeline {
    /// Classification report (and generation report when both explanation
    /// files are given), each written as TSV and JSON into `out_dir`.
    pub fn run_evaluate(
        &self,
        predictions: &Path,
        gold: &Path,
        generation: Option<(&Path, &Path)>,
        out_dir: &Path,
    ) -> Result<EvaluateOutcome, PipelineError> {
        let preds = read_label_file(predictions)?;
        let golds = read_label_file(gold)?;
        let run_name = predictions
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "predictions".into());
        let table = compare_runs(&[(run_name, preds)], &golds, self.config.evaluation.averaging)?;
        let mut files = Vec::new();
        for (name, body) in [
            ("classification_report.tsv", table.to_tsv()),
            ("classification_report.json", table.to_json()),
        ] {
            let path = out_dir.join(name);
            write_file(&path, &body)?;
            files.push(path);
        }
        let generation = match generation {
            None => None,
            Some((explanations, references)) => {
                let exp_name = explanations.display().to_string();
                let cands = parse_text_file(&read_text(explanations)?, &exp_name)?;
                let refs = parse_text_file(&read_text(references)?, &references.display().to_string())?;
                let pairs = align_generation_pairs(&cands, &refs, &exp_name, self.config.default_language)?;
                let report = generation_report(&pairs, self.embedder.as_ref())?;
                for (name, body) in [
                    ("generation_report.tsv", report.to_tsv()),
                    ("generation_report.json", report.to_json()),
                ] {
                    let path = out_dir.join(name);
                    write_file(&path, &body)?;
                    files.push(path);
                }
                Some(report)
            }
        };
        Ok(EvaluateOutcome {
            classification: table,
            generation,
            files,
        })
    }
}

/// Mock script under which the chat stages return exactly the gold labels
/// (restricted to what each prompt offers). Used to test pipeline wiring
/// against a perfect-information model.
pub fn echo_gold_script(golds: &[GoldAnnotation], taxonomy_cc: &Taxonomy, taxonomy_urw: &Taxonomy) -> MockScript {
    let mut script = MockScript::default();
    let labels_line = |labels: Vec<&String>| {
        if labels.is_empty() {
            "LABELS: none".to_string()
        } else {
            format!("LABELS: {}", labels.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("; "))
        }
    };
    for g in golds {
        let id_line = format!("ARTICLE ID: {}\n", g.article_id);
        for taxonomy in [taxonomy_cc, taxonomy_urw] {
            let domain = taxonomy.domain();
            let mains: Vec<&String> = g
                .narratives
                .iter()
                .filter(|n| Domain::of_label(n) == Some(domain) && taxonomy.has_narrative(n))
                .collect();
            script.push_contains(
                vec![
                    "STAGE: narrative_refine\n".into(),
                    id_line.clone(),
                    format!("TAXONOMY DOMAIN: {domain}\n"),
                ],
                format!("Echoing the annotation.\n{}", labels_line(mains.clone())),
            );
            for n in mains {
                let subs: Vec<&String> = g
                    .sub_narratives
                    .iter()
                    .filter(|s| taxonomy.parent_of(s).is_ok_and(|p| p == n.as_str()))
                    .collect();
                script.push_contains(
                    vec![
                        "STAGE: sub_assign\n".into(),
                        id_line.clone(),
                        format!("NARRATIVE UNDER REVIEW: {n}\n"),
                    ],
                    format!("Echoing the annotation.\n{}", labels_line(subs)),
                );
            }
        }
    }
    script
}
