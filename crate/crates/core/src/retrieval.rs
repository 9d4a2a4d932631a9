//! Sentence segmentation, ephemeral per-article sentence index and dual-pass
//! cosine retrieval.
//!
//! Pass 1 ranks every sentence against the dominant-narrative query and keeps
//! the top `k`. The lowest pass-1 score becomes the admission threshold for
//! pass 2, where each sub-narrative query may add further sentences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, Language};
use crate::embedding::{cosine, EmbedError, Embedder, EmbeddingVector};
use crate::taxonomy::{Taxonomy, TaxonomyError};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("no sentences found in text")]
    NoSentences,
    #[error("index dropped")]
    Dropped,
    #[error("top_k must be >= 1")]
    ZeroK,
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

const TERMINATORS: [char; 4] = ['.', '!', '?', '\u{0964}'];
const MIN_SENTENCE_CHARS: usize = 3;

/// Splits at sentence terminators followed by whitespace or end of text.
///
/// Fragments shorter than three characters are joined to the sentence that
/// follows them; a short trailing fragment is joined to the one before it.
pub fn segment(text: &str, _language: Language) -> Result<Vec<String>, RetrievalError> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if TERMINATORS.contains(&c) {
            let at_boundary = chars.peek().map_or(true, |&(_, n)| n.is_whitespace());
            if at_boundary {
                let end = i + c.len_utf8();
                spans.push((start, end));
                start = end;
            }
        }
    }
    spans.push((start, text.len()));
    let spans: Vec<(usize, usize)> = spans
        .into_iter()
        .filter(|&(s, e)| !text[s..e].trim().is_empty())
        .collect();

    let short = |s: usize, e: usize| text[s..e].trim().chars().count() < MIN_SENTENCE_CHARS;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    let mut carry: Option<usize> = None;
    for (s, e) in spans {
        let s = carry.take().unwrap_or(s);
        if short(s, e) {
            carry = Some(s);
        } else {
            merged.push((s, e));
        }
    }
    if let Some(s) = carry {
        match merged.last_mut() {
            Some(last) => last.1 = text.len(),
            None => merged.push((s, text.len())),
        }
    }
    if merged.is_empty() {
        return Err(RetrievalError::NoSentences);
    }
    Ok(merged.into_iter().map(|(s, e)| text[s..e].trim().to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub index: usize,
    pub text: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexState {
    Live,
    Dropped,
}

#[derive(Debug)]
pub struct SentenceIndex {
    article_id: String,
    records: Vec<SentenceRecord>,
    state: IndexState,
}

impl SentenceIndex {
    pub fn from_records(article_id: impl Into<String>, records: Vec<SentenceRecord>) -> Self {
        SentenceIndex {
            article_id: article_id.into(),
            records,
            state: IndexState::Live,
        }
    }

    pub fn article_id(&self) -> &str {
        &self.article_id
    }

    pub fn state(&self) -> IndexState {
        self.state
    }

    pub fn records(&self) -> Result<&[SentenceRecord], RetrievalError> {
        match self.state {
            IndexState::Live => Ok(&self.records),
            IndexState::Dropped => Err(RetrievalError::Dropped),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Releases all records; later queries fail.
    pub fn drop_index(&mut self) -> Result<(), RetrievalError> {
        if self.state == IndexState::Dropped {
            return Err(RetrievalError::Dropped);
        }
        self.state = IndexState::Dropped;
        self.records = Vec::new();
        Ok(())
    }

    /// `(index, score)` for every sentence against `query`.
    fn score_all(&self, query: &EmbeddingVector) -> Result<Vec<(usize, f64)>, RetrievalError> {
        self.records()?
            .iter()
            .map(|r| Ok((r.index, cosine(&r.vector, query)?)))
            .collect()
    }
}

pub fn index_article(article: &Article, embedder: &dyn Embedder) -> Result<SentenceIndex, RetrievalError> {
    let sentences = segment(&article.text, article.language)?;
    let vectors = embedder.embed(&sentences)?;
    let records = sentences
        .into_iter()
        .zip(vectors)
        .enumerate()
        .map(|(index, (text, vector))| SentenceRecord { index, text, vector })
        .collect();
    Ok(SentenceIndex::from_records(&article.id, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryComposition {
    LabelOnly,
    LabelPlusDefinition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdComparison {
    /// Admit sentences scoring at least the threshold.
    Inclusive,
    /// Admit sentences scoring strictly above the threshold.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub query_composition: QueryComposition,
    pub threshold_comparison: ThresholdComparison,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_k: 5,
            query_composition: QueryComposition::LabelPlusDefinition,
            threshold_comparison: ThresholdComparison::Inclusive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    Pass1,
    Pass2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEvidence {
    pub sentence: String,
    pub article_index: usize,
    pub score: f64,
    pub source: EvidenceSource,
    pub query_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPassResult {
    /// Sorted by article position.
    pub evidence: Vec<RetrievedEvidence>,
    /// Score of the lowest-ranked pass-1 sentence.
    pub threshold: f64,
}

fn compose(label: &str, definition: &str, mode: QueryComposition) -> String {
    match mode {
        QueryComposition::LabelPlusDefinition if !definition.trim().is_empty() => {
            format!("{label}: {definition}")
        }
        _ => label.to_string(),
    }
}

pub fn dominant_query(taxonomy: &Taxonomy, dominant: &str, mode: QueryComposition) -> Result<String, RetrievalError> {
    let e = taxonomy.narrative_entry(dominant)?;
    Ok(compose(&e.main_id, &e.main_definition, mode))
}

pub fn sub_query(taxonomy: &Taxonomy, sub: &str, mode: QueryComposition) -> Result<String, RetrievalError> {
    let e = taxonomy.sub_entry(sub)?;
    Ok(compose(&e.sub_id, &e.sub_definition, mode))
}

pub fn retrieve_dual_pass<S: AsRef<str>>(
    idx: &SentenceIndex,
    taxonomy: &Taxonomy,
    dominant: &str,
    subs: &[S],
    embedder: &dyn Embedder,
    cfg: &RetrievalConfig,
) -> Result<DualPassResult, RetrievalError> {
    if cfg.top_k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let records = idx.records()?;
    let mut queries = vec![dominant_query(taxonomy, dominant, cfg.query_composition)?];
    for s in subs {
        queries.push(sub_query(taxonomy, s.as_ref(), cfg.query_composition)?);
    }
    let query_vecs = embedder.embed(&queries)?;

    let mut ranked = idx.score_all(&query_vecs[0])?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.top_k.min(records.len()));
    let threshold = ranked.last().map(|r| r.1).ok_or(RetrievalError::NoSentences)?;

    let mut chosen: Vec<Option<RetrievedEvidence>> = vec![None; records.len()];
    for &(i, score) in &ranked {
        chosen[i] = Some(RetrievedEvidence {
            sentence: records[i].text.clone(),
            article_index: i,
            score,
            source: EvidenceSource::Pass1,
            query_label: dominant.trim().to_string(),
        });
    }

    for (sub, qv) in subs.iter().zip(&query_vecs[1..]) {
        for (i, score) in idx.score_all(qv)? {
            let admitted = match cfg.threshold_comparison {
                ThresholdComparison::Inclusive => score >= threshold,
                ThresholdComparison::Strict => score > threshold,
            };
            if admitted && chosen[i].is_none() {
                chosen[i] = Some(RetrievedEvidence {
                    sentence: records[i].text.clone(),
                    article_index: i,
                    score,
                    source: EvidenceSource::Pass2,
                    query_label: sub.as_ref().trim().to_string(),
                });
            }
        }
    }

    Ok(DualPassResult {
        evidence: chosen.into_iter().flatten().collect(),
        threshold,
    })
}
