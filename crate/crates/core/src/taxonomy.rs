//! Two-level narrative taxonomy: loading, validation, lookup and prompt rendering.
//!
//! The on-disk format is a UTF-8 TSV with a mandatory header and eight columns,
//! one row per (narrative, sub-narrative) pair:
//!
//! ```text
//! main_id  main_def  main_example  main_meta  sub_id  sub_def  sub_example  sub_meta
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Literal used for the catch-all narrative and its sub-narrative.
pub const OTHER_LABEL: &str = "Other";

pub const HEADER: [&str; 8] = [
    "main_id",
    "main_def",
    "main_example",
    "main_meta",
    "sub_id",
    "sub_def",
    "sub_example",
    "sub_meta",
];

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error("cannot read taxonomy {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty taxonomy")]
    Empty,
    #[error("line {line}: bad header, expected {expected:?}")]
    BadHeader { line: usize, expected: [&'static str; 8] },
    #[error("line {line}: malformed row, expected 8 columns, found {found}")]
    MalformedRow { line: usize, found: usize },
    #[error("line {line}: empty identifier in column {column}")]
    EmptyIdentifier { line: usize, column: &'static str },
    #[error("line {line}: identifier {label:?} contains a reserved character (';' or tab)")]
    ReservedCharacter { line: usize, label: String },
    #[error("line {line}: duplicate sub-narrative {sub_id:?} (already under {first_parent:?})")]
    DuplicateSub {
        line: usize,
        sub_id: String,
        first_parent: String,
    },
    #[error("unknown sub-narrative {0:?}")]
    UnknownSub(String),
    #[error("unknown narrative {0:?}")]
    UnknownNarrative(String),
    #[error("unknown domain {0:?} (expected CC or URW)")]
    UnknownDomain(String),
}

/// The two task domains a taxonomy (and a classifier) can cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "CC")]
    Cc,
    #[serde(rename = "URW")]
    Urw,
}

impl Domain {
    pub const ALL: [Domain; 2] = [Domain::Cc, Domain::Urw];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Cc => "CC",
            Domain::Urw => "URW",
        }
    }

    /// Label prefix used by the annotation scheme, e.g. `"CC:"`.
    pub fn label_prefix(self) -> &'static str {
        match self {
            Domain::Cc => "CC:",
            Domain::Urw => "URW:",
        }
    }

    /// Domain implied by a single label's prefix, if any.
    pub fn of_label(label: &str) -> Option<Domain> {
        Domain::ALL
            .into_iter()
            .find(|d| label.trim_start().starts_with(d.label_prefix()))
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = TaxonomyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CC" => Ok(Domain::Cc),
            "URW" => Ok(Domain::Urw),
            _ => Err(TaxonomyError::UnknownDomain(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Main,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyEntry {
    pub main_id: String,
    pub main_definition: String,
    pub main_example: String,
    pub main_metadata: String,
    pub sub_id: String,
    pub sub_definition: String,
    pub sub_example: String,
    pub sub_metadata: String,
}

impl TaxonomyEntry {
    fn columns(&self) -> [&str; 8] {
        [
            &self.main_id,
            &self.main_definition,
            &self.main_example,
            &self.main_metadata,
            &self.sub_id,
            &self.sub_definition,
            &self.sub_example,
            &self.sub_metadata,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelViolation {
    UnknownNarrative(String),
    UnknownSub(String),
    /// Sub-narrative whose parent narrative is not in the label set.
    OrphanSub { sub: String, parent: String },
}

impl fmt::Display for LabelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelViolation::UnknownNarrative(n) => write!(f, "unknown narrative {n:?}"),
            LabelViolation::UnknownSub(s) => write!(f, "unknown sub-narrative {s:?}"),
            LabelViolation::OrphanSub { sub, parent } => {
                write!(f, "orphan sub-narrative {sub:?}: parent {parent:?} not selected")
            }
        }
    }
}

/// Immutable after construction; share freely across threads.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    domain: Domain,
    entries: Vec<TaxonomyEntry>,
    /// main_id -> sub_ids in file order.
    narrative_index: Vec<(String, Vec<String>)>,
    main_pos: HashMap<String, usize>,
    sub_pos: HashMap<String, usize>,
}

impl Taxonomy {
    pub fn load(path: impl AsRef<Path>, domain: Domain) -> Result<Self, TaxonomyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, domain)
    }

    pub fn parse(text: &str, domain: Domain) -> Result<Self, TaxonomyError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty());

        let (header_line, header) = lines.next().ok_or(TaxonomyError::Empty)?;
        let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
        if cols != HEADER {
            return Err(TaxonomyError::BadHeader {
                line: header_line,
                expected: HEADER,
            });
        }

        let mut entries = Vec::new();
        for (line, row) in lines {
            let fields: Vec<&str> = row.split('\t').collect();
            if fields.len() != 8 {
                return Err(TaxonomyError::MalformedRow {
                    line,
                    found: fields.len(),
                });
            }
            let entry = TaxonomyEntry {
                main_id: fields[0].trim().to_string(),
                main_definition: fields[1].trim().to_string(),
                main_example: fields[2].trim().to_string(),
                main_metadata: fields[3].trim().to_string(),
                sub_id: fields[4].trim().to_string(),
                sub_definition: fields[5].trim().to_string(),
                sub_example: fields[6].trim().to_string(),
                sub_metadata: fields[7].trim().to_string(),
            };
            for (column, id) in [("main_id", &entry.main_id), ("sub_id", &entry.sub_id)] {
                if id.is_empty() {
                    return Err(TaxonomyError::EmptyIdentifier { line, column });
                }
                if id.contains(';') {
                    return Err(TaxonomyError::ReservedCharacter {
                        line,
                        label: id.clone(),
                    });
                }
            }
            entries.push((line, entry));
        }
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        Self::from_entries_with_lines(entries, domain)
    }

    pub fn from_entries(entries: Vec<TaxonomyEntry>, domain: Domain) -> Result<Self, TaxonomyError> {
        // Row numbers are reported 1-based, counting the implicit header.
        let numbered = entries
            .into_iter()
            .enumerate()
            .map(|(i, e)| (i + 2, e))
            .collect();
        Self::from_entries_with_lines(numbered, domain)
    }

    fn from_entries_with_lines(
        entries: Vec<(usize, TaxonomyEntry)>,
        domain: Domain,
    ) -> Result<Self, TaxonomyError> {
        if entries.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut narrative_index: Vec<(String, Vec<String>)> = Vec::new();
        let mut main_pos = HashMap::new();
        let mut sub_pos: HashMap<String, usize> = HashMap::new();
        let mut out = Vec::with_capacity(entries.len());

        for (line, entry) in entries {
            if entry.main_id.trim().is_empty() {
                return Err(TaxonomyError::EmptyIdentifier { line, column: "main_id" });
            }
            if entry.sub_id.trim().is_empty() {
                return Err(TaxonomyError::EmptyIdentifier { line, column: "sub_id" });
            }
            if let Some(&prev) = sub_pos.get(&entry.sub_id) {
                let first_parent: &TaxonomyEntry = &out[prev];
                return Err(TaxonomyError::DuplicateSub {
                    line,
                    sub_id: entry.sub_id.clone(),
                    first_parent: first_parent.main_id.clone(),
                });
            }
            let slot = *main_pos.entry(entry.main_id.clone()).or_insert_with(|| {
                narrative_index.push((entry.main_id.clone(), Vec::new()));
                narrative_index.len() - 1
            });
            narrative_index[slot].1.push(entry.sub_id.clone());
            sub_pos.insert(entry.sub_id.clone(), out.len());
            out.push(entry);
        }

        Ok(Taxonomy {
            domain,
            entries: out,
            narrative_index,
            main_pos,
            sub_pos,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn entries(&self) -> &[TaxonomyEntry] {
        &self.entries
    }

    /// Narratives with their sub-narratives, in first-appearance order.
    pub fn narrative_index(&self) -> &[(String, Vec<String>)] {
        &self.narrative_index
    }

    pub fn narratives(&self) -> impl Iterator<Item = &str> {
        self.narrative_index.iter().map(|(n, _)| n.as_str())
    }

    /// Narrative labels a classifier should learn: everything except the catch-all.
    pub fn classifier_vocab(&self) -> Vec<String> {
        self.narratives()
            .filter(|n| *n != OTHER_LABEL)
            .map(str::to_string)
            .collect()
    }

    pub fn subs_of(&self, main_id: &str) -> Result<&[String], TaxonomyError> {
        self.main_pos
            .get(main_id.trim())
            .map(|&i| self.narrative_index[i].1.as_slice())
            .ok_or_else(|| TaxonomyError::UnknownNarrative(main_id.to_string()))
    }

    pub fn has_narrative(&self, label: &str) -> bool {
        self.main_pos.contains_key(label.trim())
    }

    pub fn has_sub(&self, label: &str) -> bool {
        self.sub_pos.contains_key(label.trim())
    }

    pub fn parent_of(&self, sub_id: &str) -> Result<&str, TaxonomyError> {
        self.sub_pos
            .get(sub_id.trim())
            .map(|&i| self.entries[i].main_id.as_str())
            .ok_or_else(|| TaxonomyError::UnknownSub(sub_id.to_string()))
    }

    /// First row owning `main_id`; carries the narrative-level columns.
    pub fn narrative_entry(&self, main_id: &str) -> Result<&TaxonomyEntry, TaxonomyError> {
        let key = main_id.trim();
        self.entries
            .iter()
            .find(|e| e.main_id == key)
            .ok_or_else(|| TaxonomyError::UnknownNarrative(main_id.to_string()))
    }

    pub fn sub_entry(&self, sub_id: &str) -> Result<&TaxonomyEntry, TaxonomyError> {
        self.sub_pos
            .get(sub_id.trim())
            .map(|&i| &self.entries[i])
            .ok_or_else(|| TaxonomyError::UnknownSub(sub_id.to_string()))
    }

    /// Empty result means the label set is consistent with the hierarchy.
    /// The catch-all `Other` label is accepted at both levels.
    pub fn validate_labelset<N, S>(&self, narratives: N, subs: S) -> Vec<LabelViolation>
    where
        N: IntoIterator,
        N::Item: AsRef<str>,
        S: IntoIterator,
        S::Item: AsRef<str>,
    {
        let mut violations = Vec::new();
        let mut selected = HashSet::new();
        for n in narratives {
            let n = n.as_ref().trim().to_string();
            if n != OTHER_LABEL && !self.has_narrative(&n) {
                violations.push(LabelViolation::UnknownNarrative(n.clone()));
            }
            selected.insert(n);
        }
        for s in subs {
            let s = s.as_ref().trim();
            if s == OTHER_LABEL {
                continue;
            }
            match self.parent_of(s) {
                Ok(parent) if selected.contains(parent) => {}
                Ok(parent) => violations.push(LabelViolation::OrphanSub {
                    sub: s.to_string(),
                    parent: parent.to_string(),
                }),
                Err(_) => violations.push(LabelViolation::UnknownSub(s.to_string())),
            }
        }
        violations
    }

    /// Renders definition/example/metadata stanzas for exactly `labels`, in order.
    pub fn render_block<S: AsRef<str>>(
        &self,
        labels: &[S],
        level: Level,
    ) -> Result<String, TaxonomyError> {
        let mut out = String::new();
        for (i, label) in labels.iter().enumerate() {
            let label = label.as_ref().trim();
            let (id, definition, example, metadata) = match level {
                Level::Main => {
                    let e = self.narrative_entry(label)?;
                    (&e.main_id, &e.main_definition, &e.main_example, &e.main_metadata)
                }
                Level::Sub => {
                    let e = self.sub_entry(label)?;
                    (&e.sub_id, &e.sub_definition, &e.sub_example, &e.sub_metadata)
                }
            };
            if i > 0 {
                out.push('\n');
            }
            let kind = match level {
                Level::Main => "Narrative",
                Level::Sub => "Sub-narrative",
            };
            out.push_str(&format!("[{kind}] {id}\n"));
            out.push_str(&format!("Definition: {}\n", or_dash(definition)));
            out.push_str(&format!("Example: {}\n", or_dash(example)));
            out.push_str(&format!("Metadata: {}\n", or_dash(metadata)));
        }
        Ok(out)
    }

    /// Serializes back to the TSV format, header included.
    pub fn to_tsv(&self) -> String {
        let mut out = HEADER.join("\t");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.columns().join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn all_labels(&self) -> BTreeSet<&str> {
        self.entries
            .iter()
            .flat_map(|e| [e.main_id.as_str(), e.sub_id.as_str()])
            .collect()
    }
}

fn or_dash(s: &str) -> &str {
    if s.is_empty() {
        "-"
    } else {
        s
    }
}
