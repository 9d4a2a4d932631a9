//! Per-domain multi-label narrative classifier.
//!
//! A linear head over frozen document embeddings, trained with binary focal
//! loss and AdamW under a warmup-then-linear-decay learning-rate schedule.
//! Per-label decision thresholds are tuned on validation data by maximizing
//! F-beta with beta > 1, so that ties and near-ties resolve toward recall.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{encode_labels, CorpusError, Dataset, LabelMatrix};
use crate::embedding::{EmbedError, Embedder, EmbeddingVector};
use crate::evaluation::f1_samples;
use crate::taxonomy::{Domain, Level, Taxonomy};

pub const PROB_CLAMP: f64 = 1e-7;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const MODEL_FORMAT: &str = "narrlens-classifier";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: model expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label vocabulary is empty")]
    EmptyVocab,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("score {0} outside (0, 1)")]
    ScoreOutOfRange(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },
    #[error("model fingerprint mismatch (file {stored}, recomputed {computed})")]
    Fingerprint { stored: String, computed: String },
    #[error("model was trained with embedder {trained}, current embedder is {current}")]
    EmbedderMismatch { trained: String, current: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalLossParams {
    pub gamma: f64,
    pub alpha: f64,
}

impl Default for FocalLossParams {
    fn default() -> Self {
        FocalLossParams { gamma: 2.0, alpha: 0.25 }
    }
}

impl FocalLossParams {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(ClassifierError::InvalidParam(format!("gamma {} must be >= 0", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(ClassifierError::InvalidParam(format!("alpha {} must be in (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub weight_decay: f64,
    pub warmup_fraction: f64,
    pub seed: u64,
    /// Fraction of the corpus used for training; the rest tunes thresholds.
    pub split_ratio: f64,
    pub tuning_beta: f64,
    pub threshold_mode: ThresholdMode,
    /// Candidates returned when no label clears its threshold.
    pub fallback_k: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 8,
            batch_size: 8,
            learning_rate: 2e-5,
            adam_epsilon: 1e-8,
            weight_decay: 0.05,
            warmup_fraction: 0.10,
            seed: 42,
            split_ratio: 0.8,
            tuning_beta: 2.0,
            threshold_mode: ThresholdMode::PerLabel,
            fallback_k: 3,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: String| Err(ClassifierError::InvalidParam(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) {
            return bad("learning_rate and adam_epsilon must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} must be in [0, 1)", self.warmup_fraction));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio {} must be in (0, 1)", self.split_ratio));
        }
        if !(self.tuning_beta > 0.0) {
            return bad("tuning_beta must be positive".into());
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean over labels of the binary focal loss.
pub fn focal_loss(probs: &[f64], targets: &[f64], params: &FocalLossParams) -> Result<f64, ClassifierError> {
    if probs.len() != targets.len() {
        return Err(ClassifierError::LengthMismatch {
            left: probs.len(),
            right: targets.len(),
        });
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let FocalLossParams { gamma, alpha } = *params;
    let total: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let pos = -alpha * y * (1.0 - p).powf(gamma) * p.ln();
            let neg = -(1.0 - alpha) * (1.0 - y) * p.powf(gamma) * (1.0 - p).ln();
            pos + neg
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// Gradient of [`focal_loss`]`(sigmoid(logits), ..)` with respect to the logits.
pub fn focal_loss_gradient(
    logits: &[f64],
    targets: &[f64],
    params: &FocalLossParams,
) -> Result<Vec<f64>, ClassifierError> {
    if logits.len() != targets.len() {
        return Err(ClassifierError::LengthMismatch {
            left: logits.len(),
            right: targets.len(),
        });
    }
    let n = logits.len() as f64;
    let FocalLossParams { gamma, alpha } = *params;
    Ok(logits
        .iter()
        .zip(targets)
        .map(|(&z, &y)| {
            let p = sigmoid(z);
            let q = sigmoid(-z);
            // ln p and ln(1-p) without cancellation
            let log_p = -softplus(-z);
            let log_q = -softplus(z);
            let d_pos = alpha * (gamma * p * q.powf(gamma) * log_p - q.powf(gamma + 1.0));
            let d_neg = (1.0 - alpha) * (p.powf(gamma + 1.0) - gamma * p.powf(gamma) * q * log_q);
            (y * d_pos + (1.0 - y) * d_neg) / n
        })
        .collect())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    PerLabel,
    /// One shared cutoff maximizing micro F-beta over all labels.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub thresholds: Vec<f64>,
    pub tuning_beta: f64,
}

/// Threshold used for labels without a positive validation example.
pub const FALLBACK_THRESHOLD: f64 = 0.5;

pub fn f_beta(tp: usize, fp: usize, fn_: usize, beta: f64) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let b2 = beta * beta;
    let tp = tp as f64;
    (1.0 + b2) * tp / ((1.0 + b2) * tp + b2 * fn_ as f64 + fp as f64)
}

/// Best threshold among the observed scores; ties go to the lowest threshold.
/// `None` when there are no positives.
fn sweep(pairs: &mut [(f64, bool)], beta: f64) -> Option<(f64, f64)> {
    let positives = pairs.iter().filter(|p| p.1).count();
    if positives == 0 {
        return None;
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < pairs.len() {
        let tau = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == tau {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f = f_beta(tp, fp, positives - tp, beta);
        // descending sweep: >= keeps the lowest threshold among equals
        if best.map_or(true, |(_, bf)| f >= bf) {
            best = Some((tau, f));
        }
    }
    best
}

/// Returns `(thresholds, achieved F-beta per label)`.
pub fn tune_thresholds_with_scores(
    val_scores: &[Vec<f64>],
    val_gold: &LabelMatrix,
    beta: f64,
    mode: ThresholdMode,
) -> Result<(ThresholdVector, Vec<f64>), ClassifierError> {
    if val_scores.len() != val_gold.values.len() {
        return Err(ClassifierError::ShapeMismatch(format!(
            "{} score rows vs {} gold rows",
            val_scores.len(),
            val_gold.values.len()
        )));
    }
    let labels = val_gold.columns.len();
    for (r, (s, g)) in val_scores.iter().zip(&val_gold.values).enumerate() {
        if s.len() != labels || g.len() != labels {
            return Err(ClassifierError::ShapeMismatch(format!("row {r} has wrong width")));
        }
        if let Some(&bad) = s.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(ClassifierError::ScoreOutOfRange(bad));
        }
    }
    if !(beta > 0.0) {
        return Err(ClassifierError::InvalidParam("beta must be positive".into()));
    }
    let column = |j: usize| -> Vec<(f64, bool)> {
        val_scores
            .iter()
            .zip(&val_gold.values)
            .map(|(s, g)| (s[j], g[j] == 1))
            .collect()
    };
    let (thresholds, achieved) = match mode {
        ThresholdMode::PerLabel => (0..labels)
            .map(|j| sweep(&mut column(j), beta).unwrap_or((FALLBACK_THRESHOLD, 0.0)))
            .unzip(),
        ThresholdMode::Global => {
            let mut all: Vec<(f64, bool)> = (0..labels).flat_map(column).collect();
            let (tau, f) = sweep(&mut all, beta).unwrap_or((FALLBACK_THRESHOLD, 0.0));
            (vec![tau; labels], vec![f; labels])
        }
    };
    Ok((
        ThresholdVector {
            thresholds,
            tuning_beta: beta,
        },
        achieved,
    ))
}

pub fn tune_thresholds(
    val_scores: &[Vec<f64>],
    val_gold: &LabelMatrix,
    beta: f64,
) -> Result<ThresholdVector, ClassifierError> {
    tune_thresholds_with_scores(val_scores, val_gold, beta, ThresholdMode::PerLabel).map(|r| r.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelProvenance {
    pub embedder: String,
    pub training: TrainingConfig,
    pub loss: FocalLossParams,
}

impl ModelProvenance {
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("provenance serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub domain: Domain,
    pub vocab: Vec<String>,
    pub dim: usize,
    /// Row-major `[dim x vocab]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub thresholds: ThresholdVector,
    pub provenance: ModelProvenance,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    fingerprint: String,
    model: ClassifierModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: String,
    pub score: f64,
}

impl ClassifierModel {
    pub fn zeros(domain: Domain, vocab: Vec<String>, dim: usize, provenance: ModelProvenance) -> Self {
        let l = vocab.len();
        ClassifierModel {
            domain,
            dim,
            weights: vec![0.0; dim * l],
            bias: vec![0.0; l],
            thresholds: ThresholdVector {
                thresholds: vec![FALLBACK_THRESHOLD; l],
                tuning_beta: provenance.training.tuning_beta,
            },
            vocab,
            provenance,
        }
    }

    fn check_shapes(&self) -> Result<(), ClassifierError> {
        let l = self.vocab.len();
        if l == 0 {
            return Err(ClassifierError::EmptyVocab);
        }
        if self.weights.len() != self.dim * l || self.bias.len() != l || self.thresholds.thresholds.len() != l {
            return Err(ClassifierError::ShapeMismatch(format!(
                "weights {} (want {}), bias {} and thresholds {} (want {l})",
                self.weights.len(),
                self.dim * l,
                self.bias.len(),
                self.thresholds.thresholds.len()
            )));
        }
        if let Some(&t) = self.thresholds.thresholds.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(ClassifierError::ScoreOutOfRange(t));
        }
        Ok(())
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        let l = self.vocab.len();
        let mut z = self.bias.clone();
        for (d, &xd) in x.iter().enumerate() {
            if xd == 0.0 {
                continue;
            }
            let row = &self.weights[d * l..(d + 1) * l];
            for (zj, wj) in z.iter_mut().zip(row) {
                *zj += wj * xd;
            }
        }
        z
    }

    pub fn predict_scores(&self, x: &EmbeddingVector) -> Result<Vec<f64>, ClassifierError> {
        if x.dim() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(self.logits(x.values()).into_iter().map(sigmoid).collect())
    }

    /// Labels clearing their threshold by descending score, else the top `fallback_k`.
    pub fn candidate_labels(&self, x: &EmbeddingVector, fallback_k: usize) -> Result<Vec<Candidate>, ClassifierError> {
        let scores = self.predict_scores(x)?;
        let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let above: Vec<(usize, f64)> = ranked
            .iter()
            .copied()
            .filter(|&(j, s)| s >= self.thresholds.thresholds[j])
            .collect();
        let picked = if above.is_empty() {
            ranked.into_iter().take(fallback_k).collect()
        } else {
            above
        };
        Ok(picked
            .into_iter()
            .map(|(j, score)| Candidate {
                label: self.vocab[j].clone(),
                score,
            })
            .collect())
    }

    /// Label sets predicted by thresholds alone, without fallback.
    pub fn predict_labels(&self, x: &EmbeddingVector) -> Result<Vec<String>, ClassifierError> {
        let scores = self.predict_scores(x)?;
        Ok(scores
            .iter()
            .enumerate()
            .filter(|&(j, s)| *s >= self.thresholds.thresholds[j])
            .map(|(j, _)| self.vocab[j].clone())
            .collect())
    }

    pub fn ensure_embedder(&self, embedder: &dyn Embedder) -> Result<(), ClassifierError> {
        if embedder.identity() != self.provenance.embedder {
            return Err(ClassifierError::EmbedderMismatch {
                trained: self.provenance.embedder.clone(),
                current: embedder.identity(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            fingerprint: self.provenance.fingerprint(),
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, ClassifierError> {
        let err = |message: String| ClassifierError::ModelFile {
            path: origin.to_string(),
            message,
        };
        let file: ModelFile = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(err(format!("unsupported format {} v{}", file.format, file.version)));
        }
        let computed = file.model.provenance.fingerprint();
        if computed != file.fingerprint {
            return Err(ClassifierError::Fingerprint {
                stored: file.fingerprint,
                computed,
            });
        }
        file.model.check_shapes()?;
        Ok(file.model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        std::fs::write(path, self.to_json()).map_err(|e| ClassifierError::ModelFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassifierError::ModelFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }
}

/// Learning-rate multiplier for optimizer step `step` (0-based).
pub fn lr_factor(step: usize, total: usize, warmup: usize) -> f64 {
    if step < warmup {
        step as f64 / warmup.max(1) as f64
    } else {
        (total.saturating_sub(step)) as f64 / (total - warmup).max(1) as f64
    }
}

pub fn warmup_steps(total: usize, fraction: f64) -> usize {
    (total as f64 * fraction).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    /// Mean training loss per epoch.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    pub n_train: usize,
    pub n_val: usize,
    /// Validation F-beta achieved by each tuned threshold.
    pub threshold_scores: Vec<f64>,
    /// Samples-F1 of threshold predictions on the validation set.
    pub validation_f1: Option<f64>,
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    fn new(n: usize) -> Self {
        AdamW {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, eps: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        for ((w, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *w -= lr * weight_decay * *w;
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

fn embed_dataset(d: &Dataset, embedder: &dyn Embedder) -> Result<Vec<EmbeddingVector>, ClassifierError> {
    if d.is_empty() {
        return Ok(Vec::new());
    }
    let texts: Vec<String> = d.items.iter().map(|i| i.article.text.clone()).collect();
    Ok(embedder.embed(&texts)?)
}

pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    embedder: &dyn Embedder,
    taxonomy: &Taxonomy,
    cfg: &TrainingConfig,
    loss: &FocalLossParams,
) -> Result<TrainOutcome, ClassifierError> {
    cfg.validate()?;
    loss.validate()?;
    if train_set.is_empty() {
        return Err(ClassifierError::EmptyTrainingSet);
    }
    let vocab = taxonomy.classifier_vocab();
    if vocab.is_empty() {
        return Err(ClassifierError::EmptyVocab);
    }
    let l = vocab.len();
    let dim = embedder.dim();
    let provenance = ModelProvenance {
        embedder: embedder.identity(),
        training: cfg.clone(),
        loss: *loss,
    };
    let mut model = ClassifierModel::zeros(taxonomy.domain(), vocab.clone(), dim, provenance);

    let xs = embed_dataset(train_set, embedder)?;
    let (y, _) = encode_labels(train_set, &vocab, Level::Main)?;
    let targets: Vec<Vec<f64>> = y
        .values
        .iter()
        .map(|r| r.iter().map(|&v| f64::from(v)).collect())
        .collect();

    let n = xs.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total = cfg.epochs * batches_per_epoch;
    let warmup = warmup_steps(total, cfg.warmup_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w_opt = AdamW::new(dim * l);
    let mut b_opt = AdamW::new(l);
    let mut order: Vec<usize> = (0..n).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut gw = vec![0.0; dim * l];
            let mut gb = vec![0.0; l];
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let x = xs[i].values();
                let z = model.logits(x);
                let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
                epoch_loss += focal_loss(&p, &targets[i], loss)?;
                let g = focal_loss_gradient(&z, &targets[i], loss)?;
                for (d, &xd) in x.iter().enumerate() {
                    if xd == 0.0 {
                        continue;
                    }
                    for (gwj, gj) in gw[d * l..(d + 1) * l].iter_mut().zip(&g) {
                        *gwj += scale * xd * gj;
                    }
                }
                for (gbj, gj) in gb.iter_mut().zip(&g) {
                    *gbj += scale * gj;
                }
            }
            let lr = cfg.learning_rate * lr_factor(step, total, warmup);
            w_opt.step(&mut model.weights, &gw, lr, cfg.adam_epsilon, cfg.weight_decay);
            b_opt.step(&mut model.bias, &gb, lr, cfg.adam_epsilon, 0.0);
            step += 1;
        }
        loss_curve.push(epoch_loss / n as f64);
    }

    let mut threshold_scores = vec![0.0; l];
    let mut validation_f1 = None;
    if val_set.is_empty() {
        tracing::warn!(domain = %taxonomy.domain(), "no validation articles; keeping default thresholds");
    } else {
        let vx = embed_dataset(val_set, embedder)?;
        let (vy, _) = encode_labels(val_set, &vocab, Level::Main)?;
        let scores: Vec<Vec<f64>> = vx
            .iter()
            .map(|x| model.predict_scores(x))
            .collect::<Result<_, _>>()?;
        let (tv, achieved) = tune_thresholds_with_scores(&scores, &vy, cfg.tuning_beta, cfg.threshold_mode)?;
        model.thresholds = tv;
        threshold_scores = achieved;
        let preds: Vec<Vec<String>> = vx
            .iter()
            .map(|x| model.predict_labels(x))
            .collect::<Result<_, _>>()?;
        let golds: Vec<Vec<String>> = val_set
            .items
            .iter()
            .map(|it| it.gold.narratives.iter().filter(|g| vocab.contains(g)).cloned().collect())
            .collect();
        validation_f1 = Some(f1_samples(&preds, &golds).expect("aligned lengths").f1);
    }

    Ok(TrainOutcome {
        model,
        loss_curve,
        steps: step,
        n_train: n,
        n_val: val_set.len(),
        threshold_scores,
        validation_f1,
    })
}
