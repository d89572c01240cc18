//! Corpus ingestion: JSONL/CSV loading, text cleaning, sentence splitting
//! of unlabeled pool pages, and the minimum-length rule.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::jsonl;

/// Excerpts with fewer whitespace-delimited words than this are dropped.
pub const MIN_WORDS: usize = 4;

/// Characters stripped from both ends of an excerpt (in addition to whitespace).
const EDGE_PUNCTUATION: &[char] = &[
    '.', ',', ';', ':', '!', '?', '"', '\'', '(', ')', '[', ']', '-', '\u{2013}', '\u{2014}',
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawExcerpt {
    pub excerpt_id: String,
    pub document_id: String,
    pub page: u32,
    pub text: String,
    /// Empty for unlabeled pool text.
    #[serde(default)]
    pub annotator_id: String,
    #[serde(default)]
    pub codes: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    /// Expert-annotated excerpts, one excerpt per row.
    Annotated,
    /// Unlabeled page text, split into sentence excerpts on load.
    Pool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct LoadedCorpus {
    pub excerpts: Vec<RawExcerpt>,
    pub errors: Vec<RowError>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Unreadable { path: PathBuf, source: io::Error },
    #[error("cannot parse CSV header of {path}: {source}")]
    BadHeader { path: PathBuf, source: csv::Error },
}

/// Row shape shared by both formats; everything optional so that a missing
/// field becomes a row-level error instead of aborting the load.
#[derive(Debug, Deserialize)]
struct RowFields {
    excerpt_id: Option<String>,
    document_id: Option<String>,
    page: Option<u32>,
    text: Option<String>,
    annotator_id: Option<String>,
    codes: Option<CodesField>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CodesField {
    List(Vec<String>),
    Joined(String),
}

impl CodesField {
    fn into_set(self) -> BTreeSet<String> {
        let raw: Vec<String> = match self {
            CodesField::List(v) => v,
            CodesField::Joined(s) => s.split(';').map(str::to_string).collect(),
        };
        raw.into_iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect()
    }
}

/// Loads a JSONL (`.jsonl`/`.json`/other) or CSV (`.csv`) corpus file.
///
/// Malformed rows are reported with their 1-based line number and skipped;
/// only an unreadable file is fatal. Text is cleaned on load and rows whose
/// cleaned text is empty are rejected. Pool files are split into sentences.
pub fn load_corpus(path: impl AsRef<Path>, kind: CorpusKind) -> Result<LoadedCorpus, CorpusError> {
    let path = path.as_ref();
    let rows = if is_csv(path) { read_csv_rows(path)? } else { read_jsonl_rows(path)? };

    let mut out = LoadedCorpus::default();
    let mut seen_ids = HashSet::new();
    for (line, row) in rows {
        let fields = match row {
            Ok(f) => f,
            Err(message) => {
                out.errors.push(RowError { line, message });
                continue;
            }
        };
        match build_excerpt(fields, kind) {
            Ok(excerpt) => {
                if !seen_ids.insert(excerpt.excerpt_id.clone()) {
                    out.errors.push(RowError {
                        line,
                        message: format!("duplicate excerpt_id `{}`", excerpt.excerpt_id),
                    });
                    continue;
                }
                match kind {
                    CorpusKind::Annotated => out.excerpts.push(excerpt),
                    CorpusKind::Pool => out.excerpts.extend(split_pool_page(&excerpt)),
                }
            }
            Err(message) => out.errors.push(RowError { line, message }),
        }
    }
    Ok(out)
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

type ParsedRow = (usize, Result<RowFields, String>);

fn read_jsonl_rows(path: &Path) -> Result<Vec<ParsedRow>, CorpusError> {
    let content = fs::read_to_string(path)
        .map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
    Ok(content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str::<RowFields>(l).map_err(|e| e.to_string())))
        .collect())
}

fn read_csv_rows(path: &Path) -> Result<Vec<ParsedRow>, CorpusError> {
    let file = fs::File::open(path)
        .map_err(|source| CorpusError::Unreadable { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::BadHeader { path: path.to_path_buf(), source })?
        .clone();
    let mut rows = Vec::new();
    for record in reader.records() {
        match record {
            Ok(record) => {
                let line = record.position().map_or(0, |p| p.line() as usize);
                // Empty cells mean "absent", not "empty string".
                let mut obj = serde_json::Map::new();
                for (h, v) in headers.iter().zip(record.iter()) {
                    if v.is_empty() {
                        continue;
                    }
                    let value = if h == "page" {
                        match v.trim().parse::<u64>() {
                            Ok(n) => serde_json::Value::from(n),
                            Err(_) => serde_json::Value::from(v),
                        }
                    } else {
                        serde_json::Value::from(v)
                    };
                    obj.insert(h.to_string(), value);
                }
                let parsed = serde_json::from_value::<RowFields>(serde_json::Value::Object(obj))
                    .map_err(|e| e.to_string());
                rows.push((line, parsed));
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                rows.push((line, Err(e.to_string())));
            }
        }
    }
    Ok(rows)
}

fn build_excerpt(fields: RowFields, kind: CorpusKind) -> Result<RawExcerpt, String> {
    let excerpt_id = fields.excerpt_id.filter(|s| !s.is_empty()).ok_or("missing `excerpt_id`")?;
    let document_id = fields.document_id.filter(|s| !s.is_empty()).ok_or("missing `document_id`")?;
    let text = fields.text.ok_or("missing `text`")?;
    let text = clean_text(&text);
    if text.is_empty() {
        return Err("`text` is empty after cleaning".into());
    }
    let codes = match kind {
        CorpusKind::Annotated => fields.codes.map(CodesField::into_set).unwrap_or_default(),
        CorpusKind::Pool => BTreeSet::new(),
    };
    Ok(RawExcerpt {
        excerpt_id,
        document_id,
        page: fields.page.unwrap_or(0),
        text,
        annotator_id: fields.annotator_id.unwrap_or_default(),
        codes,
    })
}

/// Writes excerpts as JSONL in the format `load_corpus` reads.
pub fn write_corpus(path: impl AsRef<Path>, excerpts: &[RawExcerpt]) -> Result<(), jsonl::JsonlError> {
    jsonl::write_jsonl(path, excerpts)
}

/// Collapses whitespace runs to one space and strips edge punctuation.
pub fn clean_text(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| c.is_whitespace() || EDGE_PUNCTUATION.contains(&c))
        .to_string()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps excerpts with at least [`MIN_WORDS`] words; never rewrites text.
pub fn filter_short(excerpts: Vec<RawExcerpt>) -> Vec<RawExcerpt> {
    excerpts.into_iter().filter(|e| word_count(&e.text) >= MIN_WORDS).collect()
}

/// Splits text on `.`, `?` or `!` followed by whitespace and an uppercase letter.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '?' | '!') {
            continue;
        }
        let mut j = i + 1;
        let mut saw_space = false;
        while j < chars.len() && chars[j].1.is_whitespace() {
            saw_space = true;
            j += 1;
        }
        if saw_space && j < chars.len() && chars[j].1.is_uppercase() {
            let end = pos + c.len_utf8();
            sentences.push(text[start..end].to_string());
            start = chars[j].0;
        }
    }
    if start < text.len() {
        sentences.push(text[start..].to_string());
    }
    sentences.into_iter().map(|s| clean_text(&s)).filter(|s| !s.is_empty()).collect()
}

fn split_pool_page(page: &RawExcerpt) -> Vec<RawExcerpt> {
    split_sentences(&page.text)
        .into_iter()
        .enumerate()
        .map(|(i, text)| RawExcerpt {
            excerpt_id: format!("{}:s{}", page.excerpt_id, i + 1),
            document_id: page.document_id.clone(),
            page: page.page,
            text,
            annotator_id: String::new(),
            codes: BTreeSet::new(),
        })
        .collect()
}
