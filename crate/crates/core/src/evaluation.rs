//! Classification and generation metrics, and the report tables built from them.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{infer_domain, GoldAnnotation, Language};
use crate::embedding::{cosine, EmbedError, Embedder, EmbeddingVector};
use crate::taxonomy::{Domain, Level};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("length mismatch: {preds} predictions vs {golds} gold entries")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("run {run:?}: article ids do not match gold ({detail})")]
    IdMismatch { run: String, detail: String },
    #[error("cannot score empty text")]
    EmptyText,
    #[error("no runs to compare")]
    NoRuns,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub const PERFECT: Prf = Prf {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };
    pub const ZERO: Prf = Prf {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Per-article scores, then the mean over articles.
    #[default]
    Samples,
    /// Pooled true/false positive counts.
    Micro,
    /// Per-label F1, then the mean over labels seen in gold or predictions.
    Macro,
}

fn as_set<S: AsRef<str>>(labels: &[S]) -> HashSet<&str> {
    labels.iter().map(|s| s.as_ref()).collect()
}

/// Set-based scores for one article. Both empty scores 1; exactly one empty scores 0.
pub fn article_prf<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Prf {
    let (p, g) = (as_set(pred), as_set(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return Prf::PERFECT,
        (true, false) | (false, true) => return Prf::ZERO,
        _ => {}
    }
    let hit = p.intersection(&g).count() as f64;
    let precision = hit / p.len() as f64;
    let recall = hit / g.len() as f64;
    Prf {
        precision,
        recall,
        f1: harmonic(precision, recall),
    }
}

pub fn f1_samples<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<Prf, EvalError> {
    f1_averaged(preds, golds, Averaging::Samples)
}

pub fn f1_averaged<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>], mode: Averaging) -> Result<Prf, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Ok(Prf::PERFECT);
    }
    Ok(match mode {
        Averaging::Samples => {
            let n = preds.len() as f64;
            let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
            for (pr, go) in preds.iter().zip(golds) {
                let s = article_prf(pr, go);
                p += s.precision;
                r += s.recall;
                f += s.f1;
            }
            Prf {
                precision: p / n,
                recall: r / n,
                f1: f / n,
            }
        }
        Averaging::Micro => {
            let (mut tp, mut np, mut ng) = (0usize, 0usize, 0usize);
            for (pr, go) in preds.iter().zip(golds) {
                let (p, g) = (as_set(pr), as_set(go));
                tp += p.intersection(&g).count();
                np += p.len();
                ng += g.len();
            }
            if np == 0 && ng == 0 {
                Prf::PERFECT
            } else {
                let precision = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
                let recall = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
                Prf {
                    precision,
                    recall,
                    f1: harmonic(precision, recall),
                }
            }
        }
        Averaging::Macro => {
            let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
            for (pr, go) in preds.iter().zip(golds) {
                let (p, g) = (as_set(pr), as_set(go));
                for l in &p {
                    let c = counts.entry(l).or_default();
                    c.1 += 1;
                    if g.contains(l) {
                        c.0 += 1;
                    }
                }
                for l in &g {
                    counts.entry(l).or_default().2 += 1;
                }
            }
            if counts.is_empty() {
                Prf::PERFECT
            } else {
                let k = counts.len() as f64;
                let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
                for (tp, np, ng) in counts.into_values() {
                    let precision = if np == 0 { 0.0 } else { tp as f64 / np as f64 };
                    let recall = if ng == 0 { 0.0 } else { tp as f64 / ng as f64 };
                    ps += precision;
                    rs += recall;
                    fs += harmonic(precision, recall);
                }
                Prf {
                    precision: ps / k,
                    recall: rs / k,
                    f1: fs / k,
                }
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "URW")]
    Urw,
    Overall,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Cc, Scope::Urw, Scope::Overall];

    pub fn label(self) -> &'static str {
        match self {
            Scope::Cc => "CC",
            Scope::Urw => "URW",
            Scope::Overall => "Overall",
        }
    }

    fn includes(self, domain: Option<Domain>) -> bool {
        match self {
            Scope::Cc => domain == Some(Domain::Cc),
            Scope::Urw => domain == Some(Domain::Urw),
            Scope::Overall => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Cell {
    pub level: Level,
    pub scope: Scope,
    /// `None` when the scope holds no articles.
    pub score: Option<Prf>,
    pub articles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub averaging: Averaging,
    pub articles: usize,
    pub cells: Vec<F1Cell>,
}

impl F1Report {
    pub fn get(&self, level: Level, scope: Scope) -> Option<Prf> {
        self.cells
            .iter()
            .find(|c| c.level == level && c.scope == scope)
            .and_then(|c| c.score)
    }
}

fn align<'a>(
    run: &str,
    preds: &'a [GoldAnnotation],
    golds: &[GoldAnnotation],
) -> Result<Vec<&'a GoldAnnotation>, EvalError> {
    let by_name: HashMap<&str, &GoldAnnotation> = preds.iter().map(|p| (p.filename.as_str(), p)).collect();
    if by_name.len() != golds.len() || preds.len() != golds.len() {
        return Err(EvalError::IdMismatch {
            run: run.to_string(),
            detail: format!("{} predictions vs {} gold entries", preds.len(), golds.len()),
        });
    }
    golds
        .iter()
        .map(|g| {
            by_name.get(g.filename.as_str()).copied().ok_or_else(|| EvalError::IdMismatch {
                run: run.to_string(),
                detail: format!("no prediction for {}", g.filename),
            })
        })
        .collect()
}

/// Two-level, per-domain classification report. Domains come from gold label prefixes.
pub fn classification_report(
    preds: &[GoldAnnotation],
    golds: &[GoldAnnotation],
    averaging: Averaging,
) -> Result<F1Report, EvalError> {
    let aligned = align("predictions", preds, golds)?;
    let domains: Vec<Option<Domain>> = golds.iter().map(GoldAnnotation::infer_domain).collect();
    let mut cells = Vec::new();
    for level in [Level::Main, Level::Sub] {
        for scope in Scope::ALL {
            let idx: Vec<usize> = (0..golds.len()).filter(|&i| scope.includes(domains[i])).collect();
            let p: Vec<Vec<String>> = idx.iter().map(|&i| aligned[i].labels(level).to_vec()).collect();
            let g: Vec<Vec<String>> = idx.iter().map(|&i| golds[i].labels(level).to_vec()).collect();
            let score = if idx.is_empty() {
                None
            } else {
                Some(f1_averaged(&p, &g, averaging)?)
            };
            cells.push(F1Cell {
                level,
                scope,
                score,
                articles: idx.len(),
            });
        }
    }
    Ok(F1Report {
        averaging,
        articles: golds.len(),
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn greedy_mean(from: &[EmbeddingVector], to: &[EmbeddingVector]) -> Result<f64, EvalError> {
    let mut total = 0.0;
    for a in from {
        let mut best = f64::NEG_INFINITY;
        for b in to {
            best = best.max(cosine(a, b)?);
        }
        total += best;
    }
    Ok(total / from.len() as f64)
}

/// Greedy word matching: recall averages over reference words, precision over
/// candidate words, each taking the best cosine in the other text.
pub fn greedy_match_score(candidate: &str, reference: &str, embedder: &dyn Embedder) -> Result<GenScore, EvalError> {
    let (cw, rw) = (words(candidate), words(reference));
    if cw.is_empty() || rw.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let cv = embedder.embed(&cw)?;
    let rv = embedder.embed(&rw)?;
    let precision = greedy_mean(&cv, &rv)?;
    let recall = greedy_mean(&rv, &cv)?;
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(GenScore { precision, recall, f1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    /// Mean per-pair scores for each language with data.
    pub per_language: BTreeMap<Language, GenScore>,
    pub overall: GenScore,
    pub pairs: usize,
}

fn mean_scores(scores: &[GenScore]) -> GenScore {
    let n = scores.len() as f64;
    GenScore {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

/// `pairs` are `(language, candidate, reference)`.
pub fn generation_report(
    pairs: &[(Language, String, String)],
    embedder: &dyn Embedder,
) -> Result<GenerationReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let mut by_lang: BTreeMap<Language, Vec<GenScore>> = BTreeMap::new();
    let mut all = Vec::with_capacity(pairs.len());
    for (lang, cand, reference) in pairs {
        let s = greedy_match_score(cand, reference, embedder)?;
        by_lang.entry(*lang).or_default().push(s);
        all.push(s);
    }
    Ok(GenerationReport {
        per_language: by_lang.into_iter().map(|(l, v)| (l, mean_scores(&v))).collect(),
        overall: mean_scores(&all),
        pairs: pairs.len(),
    })
}

impl GenerationReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for l in Language::ALL {
            out.push('\t');
            out.push_str(l.as_str());
        }
        out.push_str("\tOverall\n");
        let rows: [(&str, fn(&GenScore) -> f64); 3] = [
            ("Precision", |s| s.precision),
            ("Recall", |s| s.recall),
            ("F1", |s| s.f1),
        ];
        for (name, get) in rows {
            out.push_str(name);
            for l in Language::ALL {
                out.push('\t');
                out.push_str(&fmt_cell(self.per_language.get(&l).map(get)));
            }
            out.push('\t');
            out.push_str(&fmt_cell(Some(get(&self.overall))));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

pub fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.4}"),
        None => "NA".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub averaging: Averaging,
    pub runs: Vec<String>,
    pub metrics: Vec<String>,
    /// `cells[metric][run]`, F1 values.
    pub cells: Vec<Vec<Option<f64>>>,
    pub reports: Vec<F1Report>,
}

pub fn metric_name(level: Level, scope: Scope) -> String {
    let level = match level {
        Level::Main => "Narrative",
        Level::Sub => "Sub-Narrative",
    };
    format!("{level} {}", scope.label())
}

/// One row per (level, scope), one column per run, in the order given.
pub fn compare_runs(
    runs: &[(String, Vec<GoldAnnotation>)],
    golds: &[GoldAnnotation],
    averaging: Averaging,
) -> Result<ComparisonTable, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let mut reports = Vec::with_capacity(runs.len());
    for (name, preds) in runs {
        align(name, preds, golds)?;
        reports.push(classification_report(preds, golds, averaging)?);
    }
    let mut metrics = Vec::new();
    let mut cells = Vec::new();
    for level in [Level::Main, Level::Sub] {
        for scope in Scope::ALL {
            metrics.push(metric_name(level, scope));
            cells.push(reports.iter().map(|r| r.get(level, scope).map(|p| p.f1)).collect());
        }
    }
    Ok(ComparisonTable {
        averaging,
        runs: runs.iter().map(|r| r.0.clone()).collect(),
        metrics,
        cells,
        reports,
    })
}

impl ComparisonTable {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for r in &self.runs {
            out.push('\t');
            out.push_str(r);
        }
        out.push('\n');
        for (m, row) in self.metrics.iter().zip(&self.cells) {
            out.push_str(m);
            for c in row {
                out.push('\t');
                out.push_str(&fmt_cell(*c));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_console(&self) -> String {
        let mut header = vec!["Task".to_string()];
        header.extend(self.runs.iter().cloned());
        let mut rows = vec![header];
        for (m, row) in self.metrics.iter().zip(&self.cells) {
            let mut r = vec![m.clone()];
            r.extend(row.iter().map(|c| fmt_cell(*c)));
            rows.push(r);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (i, r) in rows.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(j, (c, w))| if j == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes") + "\n"
    }
}

/// Domain attribution used by the reports, exposed for callers that bucket articles.
pub fn gold_domain(g: &GoldAnnotation) -> Option<Domain> {
    infer_domain(g.narratives.iter().chain(&g.sub_narratives))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::DeterministicEmbedder;
    use proptest::prelude::*;

    fn v(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sample_f1_examples() {
        let golds = vec![v(&["A", "C"]), v(&["B"])];
        assert_eq!(f1_samples(&golds, &golds).unwrap().f1, 1.0);
        let s = article_prf(&v(&["A", "B"]), &v(&["A", "C"]));
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        assert_eq!(article_prf::<String>(&[], &[]), Prf::PERFECT);
        assert_eq!(article_prf(&v(&["A"]), &[]), Prf::ZERO);
        assert_eq!(article_prf(&[], &v(&["A"])), Prf::ZERO);
        assert!(matches!(
            f1_samples(&golds, &golds[..1]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn micro_and_macro() {
        let preds = vec![v(&["A", "B"]), v(&["A"])];
        let golds = vec![v(&["A"]), v(&["A", "C"])];
        let micro = f1_averaged(&preds, &golds, Averaging::Micro).unwrap();
        assert!((micro.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((micro.recall - 2.0 / 3.0).abs() < 1e-12);
        // labels A (p=1, r=1), B (p=0, r=0), C (p=0, r=0)
        let mac = f1_averaged(&preds, &golds, Averaging::Macro).unwrap();
        assert!((mac.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    fn ann(name: &str, n: &[&str], s: &[&str]) -> GoldAnnotation {
        GoldAnnotation::new(name, v(n), v(s))
    }

    #[test]
    fn report_splits_by_domain() {
        let golds = vec![
            ann("a.txt", &["CC: X"], &["CC: X: a"]),
            ann("b.txt", &["URW: Y"], &["URW: Y: b"]),
            ann("c.txt", &["Other"], &["Other"]),
        ];
        let preds = vec![
            ann("b.txt", &["URW: Y"], &["URW: Y: c"]),
            ann("a.txt", &["CC: X"], &["CC: X: a"]),
            ann("c.txt", &["CC: X"], &["Other"]),
        ];
        let r = classification_report(&preds, &golds, Averaging::Samples).unwrap();
        assert_eq!(r.get(Level::Main, Scope::Cc).unwrap().f1, 1.0);
        assert_eq!(r.get(Level::Sub, Scope::Urw).unwrap().f1, 0.0);
        assert!((r.get(Level::Main, Scope::Overall).unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.get(Level::Sub, Scope::Overall).unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn comparison_examples() {
        let golds = vec![
            ann("a.txt", &["CC: X", "CC: Z"], &["CC: X: a"]),
            ann("b.txt", &["URW: Y"], &["URW: Y: b"]),
        ];
        let t = compare_runs(&[("gold".into(), golds.clone())], &golds, Averaging::Samples).unwrap();
        assert!(t.cells.iter().flatten().all(|c| *c == Some(1.0)));
        assert_eq!(t.metrics[0], "Narrative CC");
        assert_eq!(t.metrics[5], "Sub-Narrative Overall");

        let weak = vec![ann("a.txt", &["CC: X"], &["Other"]), ann("b.txt", &["URW: Q"], &["URW: Y: b"])];
        let strong = vec![ann("a.txt", &["CC: X", "CC: Z"], &["Other"]), ann("b.txt", &["URW: Y"], &["URW: Y: b"])];
        let t = compare_runs(&[("A".into(), weak), ("B".into(), strong)], &golds, Averaging::Samples).unwrap();
        for row in &t.cells {
            assert!(row[1].unwrap() >= row[0].unwrap());
        }
        assert!(t.to_tsv().starts_with("metric\tA\tB\n"));
        assert!(t.to_console().lines().count() == 8);

        let missing = vec![ann("a.txt", &["CC: X"], &[])];
        assert!(matches!(
            compare_runs(&[("bad".into(), missing)], &golds, Averaging::Samples),
            Err(EvalError::IdMismatch { .. })
        ));
    }

    #[test]
    fn greedy_score_identity_and_oracle() {
        let e = DeterministicEmbedder::new(64).unwrap();
        let t = "the quick brown fox";
        let s = greedy_match_score(t, t, &e).unwrap();
        assert!((s.f1 - 1.0).abs() < 1e-6);

        // Oracle: explicit max over every pair.
        let a = "climate policy costs jobs";
        let b = "green policy destroys industry jobs";
        let wa: Vec<String> = a.split(' ').map(String::from).collect();
        let wb: Vec<String> = b.split(' ').map(String::from).collect();
        let va = e.embed(&wa).unwrap();
        let vb = e.embed(&wb).unwrap();
        let mut p = 0.0;
        for x in &va {
            let mut best = -2.0f64;
            for y in &vb {
                let d: f64 = x.values().iter().zip(y.values()).map(|(u, w)| u * w).sum();
                best = best.max(d);
            }
            p += best;
        }
        p /= va.len() as f64;
        let mut r = 0.0;
        for y in &vb {
            let mut best = -2.0f64;
            for x in &va {
                let d: f64 = x.values().iter().zip(y.values()).map(|(u, w)| u * w).sum();
                best = best.max(d);
            }
            r += best;
        }
        r /= vb.len() as f64;
        let s = greedy_match_score(a, b, &e).unwrap();
        assert!((s.precision - p).abs() < 1e-12);
        assert!((s.recall - r).abs() < 1e-12);
        assert!((s.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);

        assert!(matches!(greedy_match_score("", b, &e), Err(EvalError::EmptyText)));
    }

    proptest! {
        #[test]
        fn samples_f1_is_permutation_invariant(
            pairs in proptest::collection::vec((proptest::collection::vec(0u8..5, 0..4), proptest::collection::vec(0u8..5, 0..4)), 1..10),
            rot in 0usize..10,
        ) {
            let to = |x: &Vec<u8>| x.iter().map(|k| format!("L{k}")).collect::<Vec<_>>();
            let preds: Vec<_> = pairs.iter().map(|p| to(&p.0)).collect();
            let golds: Vec<_> = pairs.iter().map(|p| to(&p.1)).collect();
            let a = f1_samples(&preds, &golds).unwrap();
            let mut pr = preds.clone();
            let mut go = golds.clone();
            let k = rot % pr.len();
            pr.rotate_left(k);
            go.rotate_left(k);
            let b = f1_samples(&pr, &go).unwrap();
            prop_assert!((a.f1 - b.f1).abs() < 1e-12);
            prop_assert!((a.precision - b.precision).abs() < 1e-12);
            prop_assert!((a.recall - b.recall).abs() < 1e-12);
        }

        #[test]
        fn adding_a_correct_label_never_lowers_recall(
            pred in proptest::collection::vec(0u8..6, 0..4),
            gold in proptest::collection::vec(0u8..6, 1..4),
        ) {
            let to = |x: &[u8]| x.iter().map(|k| format!("L{k}")).collect::<Vec<_>>();
            let before = article_prf(&to(&pred), &to(&gold));
            let mut more = pred.clone();
            more.push(gold[0]);
            let after = article_prf(&to(&more), &to(&gold));
            prop_assert!(after.recall >= before.recall);
        }

        #[test]
        fn greedy_f1_bounded(a in "[a-z]{1,6}( [a-z]{1,6}){0,6}", b in "[a-z]{1,6}( [a-z]{1,6}){0,6}") {
            let e = DeterministicEmbedder::new(32).unwrap();
            let s = greedy_match_score(&a, &b, &e).unwrap();
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            prop_assert!(s.precision.abs() <= 1.0 + 1e-9 && s.recall.abs() <= 1.0 + 1e-9);
            let t = greedy_match_score(&b, &a, &e).unwrap();
            prop_assert!((s.precision - t.recall).abs() < 1e-9);
        }
    }
}
