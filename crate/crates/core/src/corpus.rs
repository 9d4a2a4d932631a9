//! Article ingestion, gold annotations, train/validation split and multi-hot encoding.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taxonomy::{Domain, LabelViolation, Level, Taxonomy, OTHER_LABEL};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected 3 tab-separated fields, found {found}")]
    FieldCount { path: String, line: usize, found: usize },
    #[error("{path}:{line}: empty filename")]
    EmptyFilename { path: String, line: usize },
    #[error("{path}:{line}: duplicate entry for {filename}")]
    DuplicateEntry { path: String, line: usize, filename: String },
    #[error("annotated article file {0} is missing")]
    MissingArticle(String),
    #[error("article {0} is empty")]
    EmptyArticle(String),
    #[error("unknown language {0:?} (expected one of BG, EN, HI, PT, RU)")]
    UnknownLanguage(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("label vocabulary is empty")]
    EmptyVocab,
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateVocab(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "BG")]
    Bg,
    #[serde(rename = "EN")]
    En,
    #[serde(rename = "HI")]
    Hi,
    #[serde(rename = "PT")]
    Pt,
    #[serde(rename = "RU")]
    Ru,
}

impl Language {
    pub const ALL: [Language; 5] = [Language::Bg, Language::En, Language::Hi, Language::Pt, Language::Ru];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Bg => "BG",
            Language::En => "EN",
            Language::Hi => "HI",
            Language::Pt => "PT",
            Language::Ru => "RU",
        }
    }

    /// Language code from a filename prefix such as `EN_123.txt`.
    pub fn from_filename(name: &str) -> Option<Language> {
        let prefix = name.split(['_', '-', '.']).next()?;
        prefix.parse().ok()
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Language::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CorpusError::UnknownLanguage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    /// File stem.
    pub id: String,
    pub filename: String,
    pub language: Language,
    /// `None` when the domain could not be inferred.
    pub domain: Option<Domain>,
    pub text: String,
}

impl Article {
    pub fn read(path: &Path, default_language: Language) -> Result<Article, CorpusError> {
        let filename = path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                CorpusError::MissingArticle(filename.clone())
            } else {
                CorpusError::Io {
                    path: path.display().to_string(),
                    source,
                }
            }
        })?;
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyArticle(filename));
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| filename.clone());
        Ok(Article {
            language: Language::from_filename(&filename).unwrap_or(default_language),
            id,
            filename,
            domain: None,
            text,
        })
    }
}

/// Plain-text files of a directory, sorted by filename.
pub fn list_article_files(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let rd = std::fs::read_dir(dir).map_err(|source| CorpusError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in rd {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Ordered, duplicate-free label list.
fn dedup_labels<I: IntoIterator<Item = String>>(labels: I) -> Vec<String> {
    let mut seen = HashSet::new();
    labels.into_iter().filter(|l| seen.insert(l.clone())).collect()
}

pub fn parse_label_list(field: &str) -> Vec<String> {
    dedup_labels(
        field
            .split(';')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty()),
    )
}

/// Joins labels for a label file; an empty list is written as `Other`.
pub fn format_label_list(labels: &[String]) -> String {
    if labels.is_empty() {
        OTHER_LABEL.to_string()
    } else {
        labels.join(";")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub article_id: String,
    pub filename: String,
    pub narratives: Vec<String>,
    pub sub_narratives: Vec<String>,
}

impl GoldAnnotation {
    pub fn new(filename: &str, narratives: Vec<String>, subs: Vec<String>) -> Self {
        GoldAnnotation {
            article_id: file_stem(filename),
            filename: filename.to_string(),
            narratives: dedup_labels(narratives),
            sub_narratives: dedup_labels(subs),
        }
    }

    pub fn labels(&self, level: Level) -> &[String] {
        match level {
            Level::Main => &self.narratives,
            Level::Sub => &self.sub_narratives,
        }
    }

    /// Domain shared by every prefixed label, or `None` if absent or mixed.
    pub fn infer_domain(&self) -> Option<Domain> {
        infer_domain(self.narratives.iter().chain(&self.sub_narratives))
    }

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.filename,
            format_label_list(&self.narratives),
            format_label_list(&self.sub_narratives)
        )
    }
}

pub fn infer_domain<'a, I: IntoIterator<Item = &'a String>>(labels: I) -> Option<Domain> {
    let mut found: Option<Domain> = None;
    for label in labels {
        if label == OTHER_LABEL {
            continue;
        }
        match (Domain::of_label(label), found) {
            (None, _) => return None,
            (Some(d), None) => found = Some(d),
            (Some(d), Some(prev)) if d != prev => return None,
            _ => {}
        }
    }
    found
}

fn file_stem(filename: &str) -> String {
    Path::new(filename)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| filename.to_string())
}

/// Parses the `<filename>\t<narratives>\t<subs>` format used for gold and predictions.
pub fn parse_label_file(text: &str, path: &str) -> Result<Vec<GoldAnnotation>, CorpusError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::FieldCount {
                path: path.to_string(),
                line,
                found: fields.len(),
            });
        }
        let filename = fields[0].trim();
        if filename.is_empty() {
            return Err(CorpusError::EmptyFilename {
                path: path.to_string(),
                line,
            });
        }
        if !seen.insert(filename.to_string()) {
            return Err(CorpusError::DuplicateEntry {
                path: path.to_string(),
                line,
                filename: filename.to_string(),
            });
        }
        out.push(GoldAnnotation::new(
            filename,
            parse_label_list(fields[1]),
            parse_label_list(fields[2]),
        ));
    }
    Ok(out)
}

pub fn read_label_file(path: &Path) -> Result<Vec<GoldAnnotation>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_label_file(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArticle {
    pub article: Article,
    pub gold: GoldAnnotation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationIssue {
    pub article_id: String,
    pub violation: LabelViolation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: Vec<LabeledArticle>,
    /// Gold labels that do not fit the matching taxonomy.
    pub issues: Vec<AnnotationIssue>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn of_domain(&self, domain: Domain) -> Dataset {
        Dataset {
            items: self
                .items
                .iter()
                .filter(|it| it.article.domain == Some(domain))
                .cloned()
                .collect(),
            issues: Vec::new(),
        }
    }
}

pub fn load_corpus(
    articles_dir: &Path,
    annotations: &Path,
    taxonomy_cc: &Taxonomy,
    taxonomy_urw: &Taxonomy,
    default_language: Language,
) -> Result<Dataset, CorpusError> {
    let gold = read_label_file(annotations)?;
    let mut dataset = Dataset::default();
    for ann in gold {
        let mut article = Article::read(&articles_dir.join(&ann.filename), default_language)?;
        article.domain = ann.infer_domain();
        if let Some(domain) = article.domain {
            let taxonomy = match domain {
                Domain::Cc => taxonomy_cc,
                Domain::Urw => taxonomy_urw,
            };
            let narratives = ann.narratives.iter().filter(|l| *l != OTHER_LABEL);
            let subs = ann.sub_narratives.iter().filter(|l| *l != OTHER_LABEL);
            for violation in taxonomy.validate_labelset(narratives, subs) {
                tracing::warn!(article = %article.id, %violation, "gold label does not fit taxonomy");
                dataset.issues.push(AnnotationIssue {
                    article_id: article.id.clone(),
                    violation,
                });
            }
        }
        dataset.items.push(LabeledArticle { article, gold: ann });
    }
    Ok(dataset)
}

/// Seeded shuffle then prefix split; `|train| = round(ratio * N)`.
pub fn split(d: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::BadRatio(ratio));
    }
    if d.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let n = d.len();
    let n_train = ((ratio * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    if val_idx.is_empty() {
        tracing::warn!(n, ratio, "validation split is empty");
    }
    let pick = |idx: &[usize]| Dataset {
        items: idx.iter().map(|&i| d.items[i].clone()).collect(),
        issues: Vec::new(),
    };
    Ok((pick(&train_idx), pick(&val_idx)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<u8>>,
}

impl LabelMatrix {
    pub fn column(&self, j: usize) -> Vec<bool> {
        self.values.iter().map(|r| r[j] == 1).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutOfVocab {
    pub article_id: String,
    pub label: String,
}

pub fn check_vocab(vocab: &[String]) -> Result<(), CorpusError> {
    if vocab.is_empty() {
        return Err(CorpusError::EmptyVocab);
    }
    let mut seen = HashSet::new();
    for v in vocab {
        if !seen.insert(v) {
            return Err(CorpusError::DuplicateVocab(v.clone()));
        }
    }
    Ok(())
}

/// Multi-hot encoding; gold labels outside `vocab` are reported, not encoded.
pub fn encode_labels(
    d: &Dataset,
    vocab: &[String],
    level: Level,
) -> Result<(LabelMatrix, Vec<OutOfVocab>), CorpusError> {
    check_vocab(vocab)?;
    let mut report = Vec::new();
    let values = d
        .items
        .iter()
        .map(|item| {
            let gold = item.gold.labels(level);
            for label in gold.iter().filter(|l| !vocab.contains(l)) {
                report.push(OutOfVocab {
                    article_id: item.article.id.clone(),
                    label: label.clone(),
                });
            }
            vocab.iter().map(|v| u8::from(gold.contains(v))).collect()
        })
        .collect();
    Ok((
        LabelMatrix {
            rows: d.items.iter().map(|i| i.article.id.clone()).collect(),
            columns: vocab.to_vec(),
            values,
        },
        report,
    ))
}
