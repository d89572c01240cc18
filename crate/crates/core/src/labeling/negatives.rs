use std::collections::{BTreeSet, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lexicon::{matches_age_pattern, Lexicon};
use super::{LabelSource, LabelVector, LabelingError, LabeledRecord};
use crate::consolidation::normalize_for_match;
use crate::corpus::RawExcerpt;
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

/// Annotated ids and texts that pool sentences must not overlap.
#[derive(Debug, Default, Clone)]
pub struct AnnotatedIndex {
    ids: HashSet<String>,
    texts: Vec<String>,
    exact: HashSet<String>,
}

impl AnnotatedIndex {
    pub fn from_excerpts<'a>(excerpts: impl IntoIterator<Item = &'a RawExcerpt>) -> Self {
        let mut index = Self::default();
        for e in excerpts {
            index.insert(&e.excerpt_id, &e.text);
        }
        index
    }

    pub fn insert(&mut self, id: &str, text: &str) {
        self.ids.insert(id.to_string());
        let key = normalize_for_match(text);
        if self.exact.insert(key.clone()) {
            self.texts.push(key);
        }
    }

    /// True when the id is annotated or the text equals, contains, or is
    /// contained in an annotated text.
    pub fn overlaps(&self, id: &str, text: &str) -> bool {
        if self.ids.contains(id) {
            return true;
        }
        let key = normalize_for_match(text);
        self.exact.contains(&key)
            || self.texts.iter().any(|t| t.contains(key.as_str()) || key.contains(t.as_str()))
    }
}

/// Optional per-subcategory sample caps; `None` keeps every match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EnCaps(pub [Option<usize>; NUM_SUBCATEGORIES]);

impl EnCaps {
    pub fn unlimited() -> Self {
        Self::default()
    }

    pub fn uniform(cap: usize) -> Self {
        Self([Some(cap); NUM_SUBCATEGORIES])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedNegative {
    pub excerpt: RawExcerpt,
    pub label: LabelVector,
    pub matched_subcategories: Vec<Subcategory>,
    /// Lexicon terms, plus `age-pattern:<regex>` entries for age hits.
    pub matched_terms: Vec<String>,
}

impl ExtractedNegative {
    pub fn to_record(&self) -> LabeledRecord {
        let mut rec = LabeledRecord::new(&self.excerpt.excerpt_id, &self.excerpt.text, self.label);
        rec.matched_terms = self.matched_terms.clone();
        rec.matched_subcategories = self.matched_subcategories.clone();
        rec
    }
}

/// Subcategories whose identifier terms (or, for age, age patterns) occur
/// in `text`, with the sorted matched terms; age hits appear as
/// `age-pattern:<regex>`.
pub fn identifier_hits(text: &str, lexicon: &Lexicon) -> (Vec<Subcategory>, Vec<String>) {
    let mut subcategories = Vec::new();
    let mut terms = BTreeSet::new();
    for c in Subcategory::ALL {
        let hits = lexicon.matched_terms(text, c);
        let age_hits = if c == Subcategory::AgeLanguageMisuse && matches_age_pattern(text, lexicon) {
            lexicon.matched_age_patterns(text)
        } else {
            Vec::new()
        };
        if !hits.is_empty() || !age_hits.is_empty() {
            subcategories.push(c);
            terms.extend(hits);
            terms.extend(age_hits.into_iter().map(|p| format!("age-pattern:{p}")));
        }
    }
    (subcategories, terms.into_iter().collect())
}

struct Candidate<'a> {
    excerpt: &'a RawExcerpt,
    subcategories: Vec<Subcategory>,
    terms: Vec<String>,
}

/// Mines hard negatives from pool sentences.
///
/// For each subcategory, a sentence qualifies when it contains one of that
/// subcategory's identifier terms (age also accepts age patterns). Sentences
/// overlapping annotated text are skipped, duplicates by normalized text
/// keep their first occurrence, and capped subcategories are sampled
/// uniformly with a seed derived from `seed`. Output keeps pool order.
pub fn extract_negatives(
    pool: &[RawExcerpt],
    annotated: &AnnotatedIndex,
    lexicon: &Lexicon,
    caps: EnCaps,
    seed: u64,
) -> Result<Vec<ExtractedNegative>, LabelingError> {
    for c in Subcategory::ALL {
        if lexicon.terms(c).is_empty() {
            return Err(LabelingError::Config(format!("empty lexicon for {}", c.slug())));
        }
    }

    let mut seen = HashSet::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for excerpt in pool {
        if annotated.overlaps(&excerpt.excerpt_id, &excerpt.text) {
            continue;
        }
        if !seen.insert(normalize_for_match(&excerpt.text)) {
            continue;
        }
        let (subcategories, terms) = identifier_hits(&excerpt.text, lexicon);
        if !subcategories.is_empty() {
            candidates.push(Candidate { excerpt, subcategories, terms });
        }
    }

    let mut selected = vec![false; candidates.len()];
    for c in Subcategory::ALL {
        let matching: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|(_, cand)| cand.subcategories.contains(&c))
            .map(|(i, _)| i)
            .collect();
        match caps.0[c.index()] {
            Some(cap) if cap < matching.len() => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((c.index() as u64 + 1) << 32));
                for k in rand::seq::index::sample(&mut rng, matching.len(), cap) {
                    selected[matching[k]] = true;
                }
            }
            _ => matching.iter().for_each(|&i| selected[i] = true),
        }
    }

    Ok(candidates
        .into_iter()
        .zip(selected)
        .filter(|(_, keep)| *keep)
        .map(|(cand, _)| ExtractedNegative {
            excerpt: cand.excerpt.clone(),
            label: LabelVector::negative(LabelSource::En),
            matched_subcategories: cand.subcategories,
            matched_terms: cand.terms,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(id: usize, text: &str) -> RawExcerpt {
        RawExcerpt {
            excerpt_id: format!("p{id}"),
            document_id: "pool".into(),
            page: 0,
            text: text.into(),
            annotator_id: String::new(),
            codes: BTreeSet::new(),
        }
    }

    #[test]
    fn gender_term_yields_en() {
        let pool = vec![sentence(1, "He has no testicular mass but has a small reactive hydrocele")];
        let en = extract_negatives(&pool, &AnnotatedIndex::default(), &Lexicon::seed(), EnCaps::unlimited(), 1).unwrap();
        assert_eq!(en.len(), 1);
        assert!(en[0].matched_subcategories.contains(&Subcategory::GenderMisuse));
        assert!(en[0].matched_terms.contains(&"he".to_string()));
        assert_eq!(en[0].label.source(), LabelSource::En);
    }

    #[test]
    fn annotated_text_is_excluded() {
        let text = "Studies of female mice were revealing";
        let annotated = RawExcerpt { excerpt_id: "a1".into(), ..sentence(0, text) };
        let index = AnnotatedIndex::from_excerpts([&annotated]);
        let pool = vec![sentence(1, text), sentence(2, "studies of female mice were revealing here too")];
        let en = extract_negatives(&pool, &index, &Lexicon::seed(), EnCaps::unlimited(), 1).unwrap();
        assert!(en.is_empty());
    }

    #[test]
    fn age_pattern_counts_for_age() {
        let pool = vec![sentence(1, "A 65 year old presents with chest pain")];
        let en = extract_negatives(&pool, &AnnotatedIndex::default(), &Lexicon::seed(), EnCaps::unlimited(), 1).unwrap();
        assert_eq!(en[0].matched_subcategories, vec![Subcategory::AgeLanguageMisuse]);
        assert!(en[0].matched_terms[0].starts_with("age-pattern:"));
    }

    #[test]
    fn cap_is_seeded_and_exact() {
        let pool: Vec<_> = (0..25).map(|i| sentence(i, &format!("female subject number {i} enrolled"))).collect();
        let mut caps = EnCaps::unlimited();
        caps.0[Subcategory::SexMisuse.index()] = Some(10);
        let run = |seed| {
            extract_negatives(&pool, &AnnotatedIndex::default(), &Lexicon::seed(), caps, seed)
                .unwrap()
                .into_iter()
                .map(|e| e.excerpt.excerpt_id)
                .collect::<Vec<_>>()
        };
        let a = run(7);
        assert_eq!(a.len(), 10);
        assert_eq!(a, run(7));
        assert_ne!(a, run(8));
    }

    #[test]
    fn duplicates_collapse() {
        let pool = vec![sentence(1, "Female mice were used"), sentence(2, "female  mice were used")];
        let en = extract_negatives(&pool, &AnnotatedIndex::default(), &Lexicon::seed(), EnCaps::unlimited(), 1).unwrap();
        assert_eq!(en.len(), 1);
        assert_eq!(en[0].excerpt.excerpt_id, "p1");
    }

    #[test]
    fn empty_lexicon_is_config_error() {
        let mut terms: [Vec<String>; NUM_SUBCATEGORIES] = Default::default();
        terms[0] = vec!["women".into()];
        let lex = Lexicon::new(terms, &[]).unwrap();
        assert!(matches!(
            extract_negatives(&[], &AnnotatedIndex::default(), &lex, EnCaps::unlimited(), 0),
            Err(LabelingError::Config(_))
        ));
    }

    #[test]
    fn neutral_sentences_are_ignored() {
        let pool = vec![sentence(1, "Insulin lowers blood glucose")];
        let en = extract_negatives(&pool, &AnnotatedIndex::default(), &Lexicon::seed(), EnCaps::unlimited(), 1).unwrap();
        assert!(en.is_empty());
    }
}
