use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictLabel {
    #[serde(rename = "0")]
    Negative,
    #[serde(rename = "1")]
    Positive,
    #[serde(rename = "UNPARSED")]
    Unparsed,
}

impl VerdictLabel {
    pub fn as_bit(self) -> Option<bool> {
        match self {
            VerdictLabel::Negative => Some(false),
            VerdictLabel::Positive => Some(true),
            VerdictLabel::Unparsed => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmVerdict {
    pub label: VerdictLabel,
    pub reasoning: String,
    pub raw_response: String,
    pub latency_ms: u64,
}

const FINAL_MARKER: &str = "final answer";
const REASONING_MARKER: &str = "reasoning:";

/// Reads the verdict after the last "Final Answer" marker. Never fails;
/// anything unrecognised is [`VerdictLabel::Unparsed`].
pub fn parse_verdict(raw: &str) -> LlmVerdict {
    // ASCII lowercasing keeps byte offsets aligned with `raw`.
    let lower = raw.to_ascii_lowercase();
    let (label, reasoning) = match lower.rfind(FINAL_MARKER) {
        None => (VerdictLabel::Unparsed, String::new()),
        Some(at) => {
            let tail = &lower[at + FINAL_MARKER.len()..];
            let token: String = tail
                .trim_start_matches(|c: char| !c.is_alphanumeric())
                .chars()
                .take_while(|c| c.is_alphanumeric())
                .collect();
            let label = match token.as_str() {
                "1" | "yes" | "positive" | "iul" => VerdictLabel::Positive,
                "0" | "no" | "negative" => VerdictLabel::Negative,
                _ => VerdictLabel::Unparsed,
            };
            let reasoning = lower[..at]
                .rfind(REASONING_MARKER)
                .map(|r| raw[r + REASONING_MARKER.len()..at].trim().trim_end_matches(['*', '#']).trim().to_string())
                .unwrap_or_default();
            (label, reasoning)
        }
    };
    LlmVerdict { label, reasoning, raw_response: raw.to_string(), latency_ms: 0 }
}
