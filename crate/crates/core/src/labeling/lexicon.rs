use std::collections::HashSet;
use std::fs;
use std::path::Path;

use regex::{Regex, RegexBuilder};

use super::LabelingError;
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

pub const AGE_PATTERNS_FILE: &str = "age_patterns.txt";

const SEED_TERMS: [&str; NUM_SUBCATEGORIES] = [
    include_str!("../../lexicons/gender_misuse.txt"),
    include_str!("../../lexicons/sex_misuse.txt"),
    include_str!("../../lexicons/age_language_misuse.txt"),
    include_str!("../../lexicons/exclusive_language.txt"),
    include_str!("../../lexicons/non_patient_centered.txt"),
    include_str!("../../lexicons/outdated_term.txt"),
];
const SEED_AGE_PATTERNS: &str = include_str!("../../lexicons/age_patterns.txt");

/// Social-identifier terms per subcategory plus age-expression patterns.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: [Vec<String>; NUM_SUBCATEGORIES],
    age_patterns: Vec<Regex>,
}

/// A lexicon or age-pattern hit, kept for audit and UI highlighting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TermMatch {
    pub subcategory: Subcategory,
    pub term: String,
}

impl Lexicon {
    /// Terms are lowercased; duplicates within a subcategory are rejected.
    pub fn new(
        terms: [Vec<String>; NUM_SUBCATEGORIES],
        age_patterns: &[String],
    ) -> Result<Self, LabelingError> {
        let mut normalized: [Vec<String>; NUM_SUBCATEGORIES] = Default::default();
        for (c, list) in Subcategory::ALL.iter().zip(terms) {
            let mut seen = HashSet::new();
            for term in list {
                let term = term.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
                if term.is_empty() {
                    return Err(LabelingError::Config(format!("empty term in {} lexicon", c.slug())));
                }
                if !seen.insert(term.clone()) {
                    return Err(LabelingError::Config(format!(
                        "duplicate term `{term}` in {} lexicon",
                        c.slug()
                    )));
                }
                normalized[c.index()].push(term);
            }
        }
        let age_patterns = age_patterns
            .iter()
            .map(|p| {
                RegexBuilder::new(p)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| LabelingError::Config(format!("bad age pattern `{p}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { terms: normalized, age_patterns })
    }

    /// The built-in seed lexicon.
    pub fn seed() -> Self {
        let terms = SEED_TERMS.map(parse_lines);
        Self::new(terms, &parse_lines(SEED_AGE_PATTERNS)).expect("seed lexicon is valid")
    }

    /// Loads `<slug>.txt` for every subcategory and `age_patterns.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, LabelingError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path)
                .map(|s| parse_lines(&s))
                .map_err(|e| LabelingError::Config(format!("cannot read {}: {e}", path.display())))
        };
        let mut terms: [Vec<String>; NUM_SUBCATEGORIES] = Default::default();
        for c in Subcategory::ALL {
            terms[c.index()] = read(&format!("{}.txt", c.slug()))?;
        }
        Self::new(terms, &read(AGE_PATTERNS_FILE)?)
    }

    /// Writes the lexicon in the layout `load_dir` expects.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for c in Subcategory::ALL {
            let mut body = self.terms[c.index()].join("\n");
            body.push('\n');
            fs::write(dir.join(format!("{}.txt", c.slug())), body)?;
        }
        let mut patterns: Vec<&str> = self.age_patterns.iter().map(Regex::as_str).collect();
        patterns.push("");
        fs::write(dir.join(AGE_PATTERNS_FILE), patterns.join("\n"))
    }

    pub fn terms(&self, c: Subcategory) -> &[String] {
        &self.terms[c.index()]
    }

    pub fn age_patterns(&self) -> &[Regex] {
        &self.age_patterns
    }

    /// Terms of `c` found in `text` as whole words.
    pub fn matched_terms(&self, text: &str, c: Subcategory) -> Vec<String> {
        let lowered = text.to_lowercase();
        self.terms[c.index()]
            .iter()
            .filter(|t| contains_whole_word(&lowered, t))
            .cloned()
            .collect()
    }

    /// Age patterns matching `text`, as their source strings.
    pub fn matched_age_patterns(&self, text: &str) -> Vec<String> {
        self.age_patterns
            .iter()
            .filter(|p| p.is_match(text))
            .map(|p| p.as_str().to_string())
            .collect()
    }

    /// Every term hit across all subcategories, in subcategory order.
    pub fn all_matches(&self, text: &str) -> Vec<TermMatch> {
        Subcategory::ALL
            .into_iter()
            .flat_map(|c| {
                self.matched_terms(text, c).into_iter().map(move |term| TermMatch { subcategory: c, term })
            })
            .collect()
    }
}

fn parse_lines(s: &str) -> Vec<String> {
    s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// `haystack` and `needle` are already lowercase. A match must be bounded
/// by non-alphanumeric characters or the string ends.
pub(crate) fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(start, m)| {
        let before_ok = haystack[..start].chars().next_back().is_none_or(|ch| !ch.is_alphanumeric());
        let after_ok =
            haystack[start + m.len()..].chars().next().is_none_or(|ch| !ch.is_alphanumeric());
        before_ok && after_ok
    })
}

/// 1 iff any term of `c` occurs in `text` as a whole word, ignoring case.
pub fn contains_social_identifier(text: &str, lexicon: &Lexicon, c: Subcategory) -> bool {
    let lowered = text.to_lowercase();
    lexicon.terms(c).iter().any(|t| contains_whole_word(&lowered, t))
}

/// 1 iff `text` matches any configured age-expression pattern.
pub fn matches_age_pattern(text: &str, lexicon: &Lexicon) -> bool {
    lexicon.age_patterns().iter().any(|p| p.is_match(text))
}
