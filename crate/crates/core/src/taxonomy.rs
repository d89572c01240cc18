use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NUM_SUBCATEGORIES: usize = 6;

/// The six IUL subcategories the detectors target.
///
/// Index order is fixed and is the order of the `z` bits everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subcategory {
    GenderMisuse,
    SexMisuse,
    AgeLanguageMisuse,
    ExclusiveLanguage,
    NonPatientCentered,
    OutdatedTerm,
}

impl Subcategory {
    pub const ALL: [Subcategory; NUM_SUBCATEGORIES] = [
        Subcategory::GenderMisuse,
        Subcategory::SexMisuse,
        Subcategory::AgeLanguageMisuse,
        Subcategory::ExclusiveLanguage,
        Subcategory::NonPatientCentered,
        Subcategory::OutdatedTerm,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Canonical annotation code string.
    pub fn code(self) -> &'static str {
        match self {
            Subcategory::GenderMisuse => "GenderMisuse",
            Subcategory::SexMisuse => "SexMisuse",
            Subcategory::AgeLanguageMisuse => "AgeLanguageMisuse",
            Subcategory::ExclusiveLanguage => "ExclusiveLanguage",
            Subcategory::NonPatientCentered => "NonPatientCentered",
            Subcategory::OutdatedTerm => "OutdatedTerm",
        }
    }

    /// snake_case name used for lexicon file names and score head names.
    pub fn slug(self) -> &'static str {
        match self {
            Subcategory::GenderMisuse => "gender_misuse",
            Subcategory::SexMisuse => "sex_misuse",
            Subcategory::AgeLanguageMisuse => "age_language_misuse",
            Subcategory::ExclusiveLanguage => "exclusive_language",
            Subcategory::NonPatientCentered => "non_patient_centered",
            Subcategory::OutdatedTerm => "outdated_term",
        }
    }

    /// Human-readable title, as used in prompts and report tables.
    pub fn title(self) -> &'static str {
        match self {
            Subcategory::GenderMisuse => "Gender Misuse",
            Subcategory::SexMisuse => "Sex Misuse",
            Subcategory::AgeLanguageMisuse => "Age Language Misuse",
            Subcategory::ExclusiveLanguage => "Exclusive Language",
            Subcategory::NonPatientCentered => "Non-Patient Centered Language",
            Subcategory::OutdatedTerm => "Outdated Term",
        }
    }
}

impl fmt::Display for Subcategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown subcategory `{0}`")]
pub struct UnknownSubcategory(pub String);

impl FromStr for Subcategory {
    type Err = UnknownSubcategory;

    /// Accepts the code, the slug, or the title.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Subcategory::ALL
            .into_iter()
            .find(|c| {
                c.code().eq_ignore_ascii_case(s)
                    || c.slug().eq_ignore_ascii_case(s)
                    || c.title().eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| UnknownSubcategory(s.to_string()))
    }
}
