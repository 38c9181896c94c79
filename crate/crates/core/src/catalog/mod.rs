//! Synthetic catalog generation, ingestion, tokenization, vocabulary, and
//! TF-IDF construction. The TF-IDF vectors serve double duty: decoding target
//! for the multi-task trainer and sparse baseline representation for the
//! evaluation harness.

mod gen;
mod tfidf;

pub use gen::{generate_catalog, CatalogSpec};
pub use tfidf::{build_tfidf, tfidf_vector, SparseVector, TfidfModel};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Per-task target attached to a product.
#[derive(Debug, Clone, PartialEq)]
pub enum Label {
    Class { index: usize, num_classes: usize },
    Scalar(f64),
    /// Dense decoding target (TF-IDF); attached at training time, never
    /// serialized into the catalog file.
    Decode(Vec<f64>),
}

/// One catalog item.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductRecord {
    pub id: String,
    pub group: usize,
    pub title: String,
    pub tokens: Vec<String>,
    pub labels: BTreeMap<String, Label>,
}

/// Task kinds as they appear in the task registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskKind {
    Class(usize),
    Scalar,
    Decode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub kind: TaskKind,
}

/// Ordered list of tasks an experiment trains against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRegistry {
    pub tasks: Vec<TaskSpec>,
}

impl TaskRegistry {
    pub fn get(&self, name: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.name == name)
    }

    /// Parse the plain-text registry format: one task per line,
    /// `name class K`, `name scalar`, or `name decode D`. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut tasks = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: String| Error::config(format!("task registry line {}: {msg}", lineno + 1));
            let kind = match (parts.len(), parts.get(1).copied()) {
                (3, Some("class")) => TaskKind::Class(
                    parts[2]
                        .parse()
                        .map_err(|_| err(format!("bad cardinality {:?}", parts[2])))?,
                ),
                (2, Some("scalar")) => TaskKind::Scalar,
                (3, Some("decode")) => TaskKind::Decode(
                    parts[2]
                        .parse()
                        .map_err(|_| err(format!("bad dimension {:?}", parts[2])))?,
                ),
                _ => return Err(err(format!("unrecognized task line {line:?}"))),
            };
            if tasks.iter().any(|t: &TaskSpec| t.name == parts[0]) {
                return Err(err(format!("duplicate task {:?}", parts[0])));
            }
            tasks.push(TaskSpec {
                name: parts[0].to_string(),
                kind,
            });
        }
        if tasks.is_empty() {
            return Err(Error::config("task registry is empty"));
        }
        Ok(TaskRegistry { tasks })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tasks {
            match t.kind {
                TaskKind::Class(k) => out.push_str(&format!("{} class {}\n", t.name, k)),
                TaskKind::Scalar => out.push_str(&format!("{} scalar\n", t.name)),
                TaskKind::Decode(d) => out.push_str(&format!("{} decode {}\n", t.name, d)),
            }
        }
        out
    }
}

/// Lowercase, split on whitespace and punctuation, drop the punctuation,
/// keep digits.
pub fn tokenize(title: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in title.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Token statistics for one vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub index: usize,
    pub doc_freq: usize,
    pub count: usize,
}

/// Dense-indexed vocabulary over the corpus, min-count filtered.
#[derive(Debug, Clone, Default)]
pub struct Vocab {
    entries: BTreeMap<String, VocabEntry>,
    by_index: Vec<String>,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_index.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.entries.get(token).map(|e| e.index)
    }

    pub fn entry(&self, token: &str) -> Option<&VocabEntry> {
        self.entries.get(token)
    }

    pub fn token_at(&self, index: usize) -> &str {
        &self.by_index[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.by_index
    }

    /// Build a vocab whose indices follow the given token order. Used when
    /// loading externally trained word vectors, where the file order is
    /// authoritative; counts are not meaningful and are set to 1.
    pub fn from_ordered_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let mut vocab = Vocab::default();
        for (index, tok) in tokens.iter().enumerate() {
            let tok = tok.as_ref();
            if vocab.entries.contains_key(tok) {
                return Err(Error::data(format!("duplicate token {tok:?}")));
            }
            vocab.entries.insert(
                tok.to_string(),
                VocabEntry {
                    index,
                    doc_freq: 1,
                    count: 1,
                },
            );
            vocab.by_index.push(tok.to_string());
        }
        Ok(vocab)
    }
}

/// Count tokens over the records and keep those with corpus count at least
/// `min_count`. Indices are assigned by descending count, then lexicographic.
pub fn build_vocab(records: &[ProductRecord], min_count: usize) -> Result<Vocab> {
    if min_count < 1 {
        return Err(Error::config("build_vocab: min_count must be >= 1"));
    }
    let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new(); // (count, df)
    for rec in records {
        let mut seen: Vec<&str> = Vec::new();
        for tok in &rec.tokens {
            counts.entry(tok).or_default().0 += 1;
            if !seen.contains(&tok.as_str()) {
                seen.push(tok);
            }
        }
        for tok in seen {
            counts.get_mut(tok).unwrap().1 += 1;
        }
    }
    let mut kept: Vec<(&str, usize, usize)> = counts
        .into_iter()
        .filter(|(_, (c, _))| *c >= min_count)
        .map(|(t, (c, df))| (t, c, df))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let mut vocab = Vocab::default();
    for (index, (tok, count, df)) in kept.into_iter().enumerate() {
        vocab.entries.insert(
            tok.to_string(),
            VocabEntry {
                index,
                doc_freq: df,
                count,
            },
        );
        vocab.by_index.push(tok.to_string());
    }
    Ok(vocab)
}

// ---- JSONL serialization ----------------------------------------------

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    group: usize,
    title: String,
    labels: BTreeMap<String, serde_json::Value>,
}

fn label_to_json(label: &Label) -> Option<serde_json::Value> {
    match label {
        Label::Class { index, num_classes } => Some(serde_json::json!({
            "c": index,
            "k": num_classes,
        })),
        Label::Scalar(v) => serde_json::Number::from_f64(*v).map(serde_json::Value::Number),
        // decode targets are derived, not persisted
        Label::Decode(_) => None,
    }
}

fn label_from_json(value: &serde_json::Value) -> Option<Label> {
    if let Some(v) = value.as_f64() {
        return Some(Label::Scalar(v));
    }
    let obj = value.as_object()?;
    let index = obj.get("c")?.as_u64()? as usize;
    let num_classes = obj.get("k")?.as_u64()? as usize;
    Some(Label::Class { index, num_classes })
}

/// Serialize records to the JSONL catalog format.
pub fn serialize_catalog<W: Write>(records: &[ProductRecord], mut out: W) -> Result<()> {
    for rec in records {
        let mut labels = BTreeMap::new();
        for (name, label) in &rec.labels {
            if let Some(v) = label_to_json(label) {
                labels.insert(name.clone(), v);
            }
        }
        let line = RecordLine {
            id: rec.id.clone(),
            group: rec.group,
            title: rec.title.clone(),
            labels,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn catalog_to_string(records: &[ProductRecord]) -> Result<String> {
    let mut buf = Vec::new();
    serialize_catalog(records, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::data(e.to_string()))
}

/// Parse a JSONL catalog, validating every label against the registry.
/// Errors name the offending 1-based line number.
pub fn load_catalog<R: BufRead>(reader: R, registry: &TaskRegistry) -> Result<Vec<ProductRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("line {lineno}: {e}")))?;
        let tokens = tokenize(&parsed.title);
        if tokens.is_empty() {
            return Err(Error::data(format!(
                "line {lineno}: title {:?} tokenizes to nothing",
                parsed.title
            )));
        }
        let mut labels = BTreeMap::new();
        for (name, value) in &parsed.labels {
            let spec = registry.get(name).ok_or_else(|| {
                Error::data(format!("line {lineno}: unknown task {name:?}"))
            })?;
            let label = label_from_json(value)
                .ok_or_else(|| Error::data(format!("line {lineno}: malformed label {name:?}")))?;
            match (&label, &spec.kind) {
                (Label::Class { index, num_classes }, TaskKind::Class(k)) => {
                    if num_classes != k {
                        return Err(Error::data(format!(
                            "line {lineno}: task {name:?} expects {k} classes, got {num_classes}"
                        )));
                    }
                    if index >= num_classes {
                        return Err(Error::data(format!(
                            "line {lineno}: class index {index} out of range for task {name:?} with {num_classes} classes"
                        )));
                    }
                }
                (Label::Scalar(_), TaskKind::Scalar) => {}
                _ => {
                    return Err(Error::data(format!(
                        "line {lineno}: label kind does not match task {name:?}"
                    )))
                }
            }
            labels.insert(name.clone(), label);
        }
        records.push(ProductRecord {
            id: parsed.id,
            group: parsed.group,
            title: parsed.title,
            tokens,
            labels,
        });
    }
    Ok(records)
}

pub fn load_catalog_file(path: &std::path::Path, registry: &TaskRegistry) -> Result<Vec<ProductRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    load_catalog(std::io::BufReader::new(file), registry)
}
