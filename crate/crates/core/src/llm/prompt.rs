use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::digest::sha256_hex;
use crate::taxonomy::Subcategory;

pub const SYSTEM_PROMPT: &str = "You are a clinical-language annotation assistant. Your task is to determine whether a given clinical text excerpt contains inappropriate use of language (IUL), regardless of whether the medical content is factually correct.";

const SYSTEM_LABEL: &str = "System Prompt: ";

/// Definition bullets, in subcategory order.
pub const DEFINITIONS: [(&str, &str); 6] = [
    ("Gender Misuse", "Using gendered terms (e.g., \"women\", \"men\") where anatomical or sex-based terms are more accurate."),
    ("Sex Misuse", "Using terms like \"male\" or \"female\" to describe individuals, e.g., \"a 49-year-old male\" instead of \"a 49-year-old man\"."),
    ("Age Language Misuse", "Using vague or stigmatizing age terms like \"the elderly\" or \"young people\"."),
    ("Exclusive Language", "Referring to binary groups like \"both males and females\", which excludes non-binary individuals."),
    ("Non-Patient Centered Language", "Defining people by their conditions, e.g., \"diabetics\" or \"alcoholics\", instead of \"patients with diabetes\"."),
    ("Outdated Terms", "Using language no longer appropriate in clinical contexts, such as \"mentally retarded\" or \"fat and fertile female\"."),
];

const TASK: &str = "Consider the excerpt and identify any terms or patterns that might signal IUL based on the examples.";
const REASONING_HINT: &str = "[Write a brief 1\u{2013}2 sentence explanation.]";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    Definitions,
    Shots,
    #[default]
    Both,
}

impl PromptMode {
    pub fn has_definitions(self) -> bool {
        matches!(self, PromptMode::Definitions | PromptMode::Both)
    }

    pub fn has_shots(self) -> bool {
        matches!(self, PromptMode::Shots | PromptMode::Both)
    }
}

impl std::str::FromStr for PromptMode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "definitions" => Ok(PromptMode::Definitions),
            "shots" => Ok(PromptMode::Shots),
            "both" => Ok(PromptMode::Both),
            other => Err(LlmError::InvalidSpec(format!("unknown prompt mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shot {
    pub subcategory: Subcategory,
    pub excerpt: String,
    pub explanation: String,
    pub label: u8,
}

/// The six worked examples shipped with the template, one per subcategory.
pub fn default_shots() -> Vec<Shot> {
    let rows: [(Subcategory, &str, &str); 6] = [
        (
            Subcategory::GenderMisuse,
            "Often, significant changes in a child's growth reflect significant events in the family unit such as a mother going to work, parents separating, moving to a new home or a significant family illness.",
            "This reinforces traditional family structures and may stigmatize families without a mother or where mothers work. However, this reflects gender bias rather than gender misuse.",
        ),
        (
            Subcategory::SexMisuse,
            "Numerous measures of sexual function change as males age, including a decline in the frequency of orgasms, an increase in erectile dysfunction (ED), and a decline in the quality and quantity of sexual thoughts and enjoyment.",
            "This shows possible sex bias but does not misuse \"male\" in the context of individuals. Suggest verifying accuracy.",
        ),
        (
            Subcategory::AgeLanguageMisuse,
            "Hereditary pancreatitis (HP) is an autosomal dominant disease with 80% penetrance, characterized by recurrent episodes of pancreatitis from childhood with a familial occurrence.",
            "\"Childhood\" is appropriate in this context and is not vague.",
        ),
        (
            Subcategory::ExclusiveLanguage,
            "The gross morphological appearance of the nuclear chromatin differs in cells between males and females.",
            "This reflects a binary framing of sex, but in this scientific context, it's acceptable.",
        ),
        (
            Subcategory::NonPatientCentered,
            "A landmark study detailing the clinical features of alcoholic hepatitis; also, one of the first to demonstrate a potential benefit from corticosteroid therapy.",
            "\"Alcoholic\" refers to the disease name here, not individuals. No IUL.",
        ),
        (
            Subcategory::OutdatedTerm,
            "Psychomotor retardation or agitation nearly every day that is observable by others.",
            "This is a proper clinical use of \"retardation\" within a DSM context. Acceptable.",
        ),
    ];
    rows.into_iter()
        .map(|(subcategory, excerpt, explanation)| Shot {
            subcategory,
            excerpt: excerpt.into(),
            explanation: explanation.into(),
            label: 1,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub shots: Vec<Shot>,
    pub target_excerpt: String,
}

impl PromptSpec {
    /// Spec for `mode` using the default shots where the mode needs them.
    pub fn standard(mode: PromptMode, target_excerpt: impl Into<String>) -> Self {
        let shots = if mode.has_shots() { default_shots() } else { Vec::new() };
        Self { mode, shots, target_excerpt: target_excerpt.into() }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.target_excerpt.trim().is_empty() {
            return Err(LlmError::EmptyExcerpt);
        }
        match (self.mode.has_shots(), self.shots.is_empty()) {
            (true, true) => Err(LlmError::InvalidSpec(format!("{:?} mode needs at least one shot", self.mode))),
            (false, false) => Err(LlmError::InvalidSpec("definitions mode takes no shots".into())),
            _ => Ok(()),
        }
        .and_then(|()| match self.shots.iter().find(|s| s.label > 1) {
            Some(s) => Err(LlmError::InvalidSpec(format!("shot label must be 0 or 1, got {}", s.label))),
            None => Ok(()),
        })
    }
}

/// A prompt split into the system message and the user message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

impl RenderedPrompt {
    /// The whole prompt as one document, system preamble first.
    pub fn text(&self) -> String {
        format!("{SYSTEM_LABEL}{}\n\n{}", self.system, self.user)
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.text())
    }
}

pub fn render_prompt(spec: &PromptSpec) -> Result<RenderedPrompt, LlmError> {
    spec.validate()?;
    let mut user = String::new();
    if spec.mode.has_definitions() {
        user.push_str("Definitions of IUL Categories:\n");
        for (name, body) in DEFINITIONS {
            user.push_str(&format!("- {name}: {body}\n"));
        }
        user.push('\n');
    }
    if spec.mode.has_shots() {
        user.push_str("Examples:\n");
        for (i, shot) in spec.shots.iter().enumerate() {
            if i > 0 {
                user.push('\n');
            }
            user.push_str(&format!(
                "- {}\n  Excerpt: \"{}\"\n  Explanation: {}\n  IUL Label: {}\n",
                shot.subcategory.title(),
                one_line(&shot.excerpt),
                one_line(&shot.explanation),
                shot.label
            ));
        }
        user.push('\n');
    }
    user.push_str(&format!("Task: {TASK}\n\n"));
    user.push_str(&format!("Excerpt:\n{}\n\n", one_line(&spec.target_excerpt)));
    user.push_str(&format!("Reasoning: {REASONING_HINT}\n\nFinal Answer:\n"));
    Ok(RenderedPrompt { system: SYSTEM_PROMPT.to_string(), user })
}

/// Renders the full prompt text.
pub fn build_prompt(spec: &PromptSpec) -> Result<String, LlmError> {
    render_prompt(spec).map(|p| p.text())
}

// Keeps every block on its own lines whatever the excerpt contains.
fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
