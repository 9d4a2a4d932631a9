//! Embedding backends, unit vectors and cosine similarity.
//!
//! # Reference hash for the deterministic embedder
//!
//! Text is split on Unicode whitespace; each token is stripped of leading and
//! trailing non-alphanumeric characters and lowercased, and empty tokens are
//! dropped. Features are the unigrams `"u:" + tok` and the bigrams
//! `"b:" + tok_i + " " + tok_{i+1}`. Each feature's UTF-8 bytes are hashed with
//! 64-bit FNV-1a (offset `0xcbf29ce484222325`, prime `0x100000001b3`), then
//! finalized with the splitmix64 mixer:
//!
//! ```text
//! h ^= h >> 30; h *= 0xbf58476d1ce4e5b9;
//! h ^= h >> 27; h *= 0x94d049bb133111eb;
//! h ^= h >> 31;
//! ```
//!
//! The feature adds `+1.0` (bit 63 clear) or `-1.0` (bit 63 set) to slot
//! `h % dim`. The accumulator is then L2-normalized. An all-zero accumulator
//! yields the basis vector `e1` and is flagged as degenerate.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpError, JsonClient, RetryPolicy};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text (item {0})")]
    EmptyText(usize),
    #[error("no texts to embed")]
    NoInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid embedder config: {0}")]
    Config(String),
    #[error("non-finite component in embedding")]
    NonFinite,
    #[error("backend returned {got} embeddings for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("network access refused in offline mode")]
    Offline,
    #[error(transparent)]
    Http(#[from] HttpError),
}

/// A unit-length embedding. Construction always normalizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `values` to unit length. Rejects empty, all-zero or non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::Config("zero-dimensional vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbedError::NonFinite);
        }
        Ok(EmbeddingVector {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn basis(dim: usize, axis: usize) -> Self {
        assert!(axis < dim, "axis {axis} out of range for dim {dim}");
        let mut values = vec![0.0; dim];
        values[axis] = 1.0;
        EmbeddingVector { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl std::ops::Neg for &EmbeddingVector {
    type Output = EmbeddingVector;

    fn neg(self) -> EmbeddingVector {
        EmbeddingVector {
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Dot product of two unit vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix_finalize(mut h: u64) -> u64 {
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Feature hash used by the deterministic embedder.
pub fn feature_hash(feature: &str) -> u64 {
    splitmix_finalize(fnv1a64(feature.as_bytes()))
}

pub fn hash_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashedEmbedding {
    pub vector: EmbeddingVector,
    /// Set when no feature survived and the `e1` fallback was returned.
    pub degenerate: bool,
}

pub fn deterministic_embed(text: &str, dim: usize) -> Result<HashedEmbedding, EmbedError> {
    if dim == 0 {
        return Err(EmbedError::Config("dim must be positive".into()));
    }
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText(0));
    }
    let tokens = hash_tokens(text);
    let mut acc = vec![0.0f64; dim];
    let mut add = |feature: String| {
        let h = feature_hash(&feature);
        let slot = (h % dim as u64) as usize;
        acc[slot] += if h >> 63 == 1 { -1.0 } else { 1.0 };
    };
    for tok in &tokens {
        add(format!("u:{tok}"));
    }
    for pair in tokens.windows(2) {
        add(format!("b:{} {}", pair[0], pair[1]));
    }
    match EmbeddingVector::new(acc) {
        Ok(vector) => Ok(HashedEmbedding {
            vector,
            degenerate: false,
        }),
        Err(_) => Ok(HashedEmbedding {
            vector: EmbeddingVector::basis(dim, 0),
            degenerate: true,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderBackend {
    Remote,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedderConfig {
    pub backend: EmbedderBackend,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub dim: usize,
    pub max_batch: usize,
    pub max_parallel: usize,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            backend: EmbedderBackend::Deterministic,
            endpoint: None,
            model_name: None,
            dim: 256,
            max_batch: 64,
            max_parallel: 4,
            timeout_secs: 30,
            retries: 3,
            backoff_ms: 250,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be > 0".into()));
        }
        if self.max_batch == 0 {
            return Err(EmbedError::Config("max_batch must be >= 1".into()));
        }
        if self.max_parallel == 0 {
            return Err(EmbedError::Config("max_parallel must be >= 1".into()));
        }
        if self.backend == EmbedderBackend::Remote {
            if self.endpoint.as_deref().map_or(true, |e| e.trim().is_empty()) {
                return Err(EmbedError::Config("remote backend needs an endpoint".into()));
            }
            if self.model_name.as_deref().map_or(true, |m| m.trim().is_empty()) {
                return Err(EmbedError::Config("remote backend needs a model_name".into()));
            }
        }
        Ok(())
    }

    /// Stable identity string; models trained against one embedder must not be
    /// reused with another.
    pub fn identity(&self) -> String {
        match self.backend {
            EmbedderBackend::Deterministic => format!("deterministic/fnv1a-splitmix/{}", self.dim),
            EmbedderBackend::Remote => format!(
                "remote/{}/{}",
                self.model_name.as_deref().unwrap_or_default(),
                self.dim
            ),
        }
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn identity(&self) -> String;

    /// Output is order-aligned with `texts`; every vector is unit length.
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed(&[text.to_string()])?;
        Ok(v.remove(0))
    }
}

fn check_inputs(texts: &[String]) -> Result<(), EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::NoInput);
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText(i));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    dim: usize,
}

impl DeterministicEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::Config("dim must be > 0".into()));
        }
        Ok(DeterministicEmbedder { dim })
    }
}

impl Embedder for DeterministicEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("deterministic/fnv1a-splitmix/{}", self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_inputs(texts)?;
        texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim).map(|h| h.vector))
            .collect()
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// Client for an HTTP endpoint speaking the common embeddings wire shape.
pub struct RemoteEmbedder {
    client: JsonClient,
    model: String,
    dim: usize,
    max_batch: usize,
    max_parallel: usize,
}

impl RemoteEmbedder {
    pub fn new(cfg: &EmbedderConfig) -> Result<Self, EmbedError> {
        cfg.validate()?;
        let endpoint = cfg.endpoint.clone().unwrap_or_default();
        let policy = RetryPolicy {
            retries: cfg.retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            timeout: Duration::from_secs(cfg.timeout_secs),
        };
        Ok(RemoteEmbedder {
            client: JsonClient::new(endpoint, policy),
            model: cfg.model_name.clone().unwrap_or_default(),
            dim: cfg.dim,
            max_batch: cfg.max_batch,
            max_parallel: cfg.max_parallel,
        })
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let resp: EmbeddingResponse = self.client.post(&EmbeddingRequest {
            model: &self.model,
            input: batch,
        })?;
        if resp.data.len() != batch.len() {
            return Err(EmbedError::CountMismatch {
                expected: batch.len(),
                got: resp.data.len(),
            });
        }
        let mut slots: Vec<Option<EmbeddingVector>> = vec![None; batch.len()];
        for datum in resp.data {
            if datum.embedding.len() != self.dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dim,
                    actual: datum.embedding.len(),
                });
            }
            let slot = slots.get_mut(datum.index).ok_or(EmbedError::CountMismatch {
                expected: batch.len(),
                got: datum.index + 1,
            })?;
            *slot = Some(EmbeddingVector::new(datum.embedding)?);
        }
        slots
            .into_iter()
            .map(|s| {
                s.ok_or(EmbedError::CountMismatch {
                    expected: batch.len(),
                    got: 0,
                })
            })
            .collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> String {
        format!("remote/{}/{}", self.model, self.dim)
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        check_inputs(texts)?;
        let batches: Vec<&[String]> = texts.chunks(self.max_batch).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in batches.chunks(self.max_parallel) {
            let results: Vec<Result<Vec<EmbeddingVector>, EmbedError>> = std::thread::scope(|s| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| s.spawn(move || self.embed_batch(batch)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("embedding worker panicked"))
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}

/// Builds the configured backend. `offline` forces the deterministic embedder.
pub fn build_embedder(cfg: &EmbedderConfig, offline: bool) -> Result<Box<dyn Embedder>, EmbedError> {
    cfg.validate()?;
    match (cfg.backend, offline) {
        (EmbedderBackend::Deterministic, _) | (EmbedderBackend::Remote, true) => {
            Ok(Box::new(DeterministicEmbedder::new(cfg.dim)?))
        }
        (EmbedderBackend::Remote, false) => Ok(Box::new(RemoteEmbedder::new(cfg)?)),
    }
}
