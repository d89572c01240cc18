//! Screening toolkit for inappropriate use of language (IUL) in medical
//! curricula.
//!
//! The crate covers the whole offline pipeline: corpus ingestion and text
//! cleaning, consolidation of overlapping annotations, positive/negative
//! labeling, multilabel-stratified splitting, linear detectors trained with
//! weighted binary cross-entropy, few-shot prompt rendering and verdict
//! parsing for chat-completion models, evaluation metrics, and the state
//! machine behind the expert review queue.

pub mod consolidation;
pub mod corpus;
pub mod digest;
pub mod evaluation;
pub mod experiment;
pub mod jsonl;
pub mod labeling;
pub mod llm;
pub mod modeling;
pub mod review;
pub mod splitting;
pub mod synth;
pub mod taxonomy;

pub use consolidation::{consolidate, group_related_quotes, ConsolidatedExcerpt, QuoteGroup};
pub use corpus::{clean_text, filter_short, load_corpus, CorpusKind, RawExcerpt};
pub use labeling::{LabelSource, LabelVector, Lexicon};
pub use taxonomy::{Subcategory, NUM_SUBCATEGORIES};
