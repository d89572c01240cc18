//! Positive labels from merged annotation codes, annotated negatives (AN),
//! and extracted hard negatives (EN) mined from unlabeled text.

mod lexicon;
mod negatives;

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use lexicon::{contains_social_identifier, matches_age_pattern, Lexicon, TermMatch, AGE_PATTERNS_FILE};
pub use negatives::{extract_negatives, identifier_hits, AnnotatedIndex, EnCaps, ExtractedNegative};

use crate::consolidation::{normalize_for_match, ConsolidatedExcerpt};
use crate::corpus::RawExcerpt;
use crate::jsonl::{self, JsonlError};
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

#[derive(Debug, thiserror::Error)]
pub enum LabelingError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid label vector: {0}")]
    InvalidLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum LabelSource {
    Positive,
    /// Annotated negative: expert-coded, carries identifiers or bias, no IUL.
    An,
    /// Extracted negative: unlabeled text with a lexicon or age-pattern hit.
    En,
}

/// General IUL bit plus one bit per subcategory.
///
/// Invariants: `z_c = 1` implies `y = 1`; a positive `y` has at least one
/// subcategory bit; AN and EN vectors are all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelVector {
    y: bool,
    z: [bool; NUM_SUBCATEGORIES],
    source: LabelSource,
}

impl LabelVector {
    pub fn new(y: bool, z: [bool; NUM_SUBCATEGORIES], source: LabelSource) -> Result<Self, LabelingError> {
        let any_z = z.iter().any(|b| *b);
        if any_z && !y {
            return Err(LabelingError::InvalidLabel("subcategory bit set while y = 0".into()));
        }
        if y && !any_z {
            return Err(LabelingError::InvalidLabel("y = 1 requires at least one subcategory".into()));
        }
        match source {
            LabelSource::Positive if !y => {
                Err(LabelingError::InvalidLabel("POSITIVE label with y = 0".into()))
            }
            LabelSource::An | LabelSource::En if y => {
                Err(LabelingError::InvalidLabel(format!("{source:?} label with y = 1")))
            }
            _ => Ok(Self { y, z, source }),
        }
    }

    pub fn negative(source: LabelSource) -> Self {
        Self::new(false, [false; NUM_SUBCATEGORIES], source).expect("all-zero negative")
    }

    /// Derives the source from `y`: positives are POSITIVE, negatives AN.
    pub fn from_bits(y: bool, z: [bool; NUM_SUBCATEGORIES]) -> Result<Self, LabelingError> {
        Self::new(y, z, if y { LabelSource::Positive } else { LabelSource::An })
    }

    pub fn y(&self) -> bool {
        self.y
    }

    pub fn z(&self) -> [bool; NUM_SUBCATEGORIES] {
        self.z
    }

    pub fn has(&self, c: Subcategory) -> bool {
        self.z[c.index()]
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    /// `[y, z1..z6]` as 0/1, the stratification label layout.
    pub fn bits(&self) -> [bool; NUM_SUBCATEGORIES + 1] {
        let mut out = [false; NUM_SUBCATEGORIES + 1];
        out[0] = self.y;
        out[1..].copy_from_slice(&self.z);
        out
    }
}

/// Which annotation codes carry the IUL flag, social identifiers, and bias.
/// Subcategory codes are the canonical [`Subcategory::code`] strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeScheme {
    pub iul_code: String,
    pub social_identifier_prefix: String,
    pub bias_prefix: String,
}

impl Default for CodeScheme {
    fn default() -> Self {
        Self { iul_code: "IUL".into(), social_identifier_prefix: "SI:".into(), bias_prefix: "Bias:".into() }
    }
}

impl CodeScheme {
    fn subcategory_hits(&self, codes: &BTreeSet<String>) -> [bool; NUM_SUBCATEGORIES] {
        Subcategory::ALL.map(|c| codes.contains(c.code()))
    }
}

/// General and subcategory labels from the merged codes.
///
/// `y = 1` iff the IUL code is present and at least one subcategory code is;
/// `z_c = 1` iff `y = 1` and `c` is present. Returns `None` when `y = 0`.
pub fn assign_positive_labels(excerpt: &ConsolidatedExcerpt, scheme: &CodeScheme) -> Option<LabelVector> {
    let codes = &excerpt.merged_codes;
    let z = scheme.subcategory_hits(codes);
    let y = codes.contains(&scheme.iul_code) && z.iter().any(|b| *b);
    y.then(|| LabelVector::new(true, z, LabelSource::Positive).expect("positive with a subcategory"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedNegative {
    pub excerpt: ConsolidatedExcerpt,
    pub label: LabelVector,
    /// The identifier or bias codes that qualified the excerpt.
    pub basis: Vec<String>,
}

/// Excerpts carrying a social-identifier or bias code but no IUL code and
/// no subcategory code.
pub fn select_annotated_negatives(
    excerpts: &[ConsolidatedExcerpt],
    scheme: &CodeScheme,
) -> Vec<AnnotatedNegative> {
    excerpts
        .iter()
        .filter(|e| assign_positive_labels(e, scheme).is_none())
        .filter(|e| {
            !e.merged_codes.contains(&scheme.iul_code)
                && !scheme.subcategory_hits(&e.merged_codes).iter().any(|b| *b)
        })
        .filter_map(|e| {
            let basis: Vec<String> = e
                .merged_codes
                .iter()
                .filter(|c| c.starts_with(&scheme.social_identifier_prefix) || c.starts_with(&scheme.bias_prefix))
                .cloned()
                .collect();
            (!basis.is_empty()).then(|| AnnotatedNegative {
                excerpt: e.clone(),
                label: LabelVector::negative(LabelSource::An),
                basis,
            })
        })
        .collect()
}

/// One row of a labeled-set file; also the review-export row format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub excerpt_id: String,
    pub text: String,
    pub y: u8,
    pub z: [u8; NUM_SUBCATEGORIES],
    pub source: LabelSource,
    #[serde(default)]
    pub matched_terms: Vec<String>,
    /// Subcategories whose lexicon matched an extracted negative.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matched_subcategories: Vec<Subcategory>,
}

impl LabeledRecord {
    pub fn new(excerpt_id: impl Into<String>, text: impl Into<String>, label: LabelVector) -> Self {
        Self {
            excerpt_id: excerpt_id.into(),
            text: text.into(),
            y: label.y() as u8,
            z: label.z().map(|b| b as u8),
            source: label.source(),
            matched_terms: Vec::new(),
            matched_subcategories: Vec::new(),
        }
    }

    /// Re-validates the stored bits.
    pub fn label(&self) -> Result<LabelVector, LabelingError> {
        let bit = |v: u8| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(LabelingError::InvalidLabel(format!("bit value {other}"))),
        };
        let mut z = [false; NUM_SUBCATEGORIES];
        for (dst, src) in z.iter_mut().zip(self.z) {
            *dst = bit(src)?;
        }
        LabelVector::new(bit(self.y)?, z, self.source)
    }

    pub fn positive_for(&self, c: Subcategory) -> bool {
        self.z[c.index()] == 1
    }
}

pub fn write_labeled_set(path: impl AsRef<Path>, rows: &[LabeledRecord]) -> Result<(), JsonlError> {
    jsonl::write_jsonl(path, rows)
}

/// Reads a labeled-set file and checks every row's label invariants.
pub fn read_labeled_set(path: impl AsRef<Path>) -> Result<Vec<LabeledRecord>, LabelingError> {
    let rows: Vec<LabeledRecord> =
        jsonl::read_jsonl(path).map_err(|e| LabelingError::Config(e.to_string()))?;
    for row in &rows {
        row.label().map_err(|e| LabelingError::InvalidLabel(format!("{}: {e}", row.excerpt_id)))?;
    }
    Ok(rows)
}

/// Concatenates POSITIVE, AN and EN rows, dropping any row whose id or
/// normalized text was already taken by an earlier (higher-precedence) row.
pub fn assemble_labeled_set(groups: [Vec<LabeledRecord>; 3]) -> Vec<LabeledRecord> {
    let mut ids = HashSet::new();
    let mut texts = HashSet::new();
    let mut out = Vec::new();
    for row in groups.into_iter().flatten() {
        let key = normalize_for_match(&row.text);
        if ids.contains(&row.excerpt_id) || texts.contains(&key) {
            continue;
        }
        ids.insert(row.excerpt_id.clone());
        texts.insert(key);
        out.push(row);
    }
    out
}

/// Row counts of an assembled labeled set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub positive: usize,
    pub annotated_negative: usize,
    pub extracted_negative: usize,
    /// Rows dropped because a higher-precedence row had the same id or text.
    pub dropped: usize,
    pub per_subcategory: [usize; NUM_SUBCATEGORIES],
}

/// Everything the label stage needs besides the consolidated excerpts.
#[derive(Debug, Clone)]
pub struct LabelInputs<'a> {
    /// Raw annotated excerpts (all annotators); pool text overlapping any of
    /// them is not eligible as an extracted negative.
    pub annotated: &'a [RawExcerpt],
    /// Pool sentences.
    pub pool: &'a [RawExcerpt],
    pub lexicon: &'a Lexicon,
    pub scheme: &'a CodeScheme,
    pub caps: EnCaps,
    pub seed: u64,
}

/// POSITIVE, AN and EN rows in that order. Negative rows carry the
/// subcategories whose identifiers they mention, which decides where they
/// serve as negatives for subcategory-specific detectors.
pub fn build_labeled_set(
    consolidated: &[ConsolidatedExcerpt],
    inputs: &LabelInputs,
) -> Result<(Vec<LabeledRecord>, LabelCounts), LabelingError> {
    let positives: Vec<LabeledRecord> = consolidated
        .iter()
        .filter_map(|e| assign_positive_labels(e, inputs.scheme).map(|l| LabeledRecord::new(&e.excerpt_id, &e.text, l)))
        .collect();
    let annotated_negatives: Vec<LabeledRecord> = select_annotated_negatives(consolidated, inputs.scheme)
        .into_iter()
        .map(|an| {
            let mut rec = LabeledRecord::new(&an.excerpt.excerpt_id, &an.excerpt.text, an.label);
            let (subcategories, terms) = identifier_hits(&an.excerpt.text, inputs.lexicon);
            rec.matched_subcategories = subcategories;
            rec.matched_terms = terms;
            rec
        })
        .collect();
    let index = AnnotatedIndex::from_excerpts(inputs.annotated);
    let extracted: Vec<LabeledRecord> =
        extract_negatives(inputs.pool, &index, inputs.lexicon, inputs.caps, inputs.seed)?
            .iter()
            .map(ExtractedNegative::to_record)
            .collect();
    let total = positives.len() + annotated_negatives.len() + extracted.len();
    let rows = assemble_labeled_set([positives, annotated_negatives, extracted]);
    let mut counts = LabelCounts { dropped: total - rows.len(), ..LabelCounts::default() };
    for row in &rows {
        match row.source {
            LabelSource::Positive => counts.positive += 1,
            LabelSource::An => counts.annotated_negative += 1,
            LabelSource::En => counts.extracted_negative += 1,
        }
        for c in Subcategory::ALL {
            counts.per_subcategory[c.index()] += row.positive_for(c) as usize;
        }
    }
    Ok((rows, counts))
}
