//! Seeded synthetic corpus with planted subcategory trigger phrases.
//!
//! Each base sentence is neutral clinical prose. Every subcategory is
//! planted independently with probability `positive_rate`. Sentences with
//! no trigger either become annotated negatives (a social-identifier clause
//! used appropriately, coded `SI:`/`Bias:`) or stay uncoded and are dropped.
//! Annotations are spread over several annotators: one codes the whole
//! sentence with part of the codes, others code a fragment around a
//! trigger with the rest, so consolidation is needed to recover the label.
//! Pool pages mix neutral sentences with identifier clauses whose contexts
//! differ from those in the annotated text.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::consolidation::normalize_for_match;
use crate::corpus::RawExcerpt;
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sentences: usize,
    pub positive_rate: f64,
    /// Share of trigger-free sentences coded as annotated negatives.
    pub annotated_negative_rate: f64,
    /// Share of positive sentences that also carry an identifier clause.
    pub positive_distractor_rate: f64,
    pub documents: usize,
    pub pool_pages: usize,
    pub pool_sentences_per_page: usize,
    /// Share of pool sentences carrying an identifier clause.
    pub pool_identifier_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sentences: 2000,
            positive_rate: 0.15,
            annotated_negative_rate: 0.7,
            positive_distractor_rate: 0.2,
            documents: 40,
            pool_pages: 300,
            pool_sentences_per_page: 4,
            pool_identifier_rate: 0.5,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub annotated: Vec<RawExcerpt>,
    /// Whole pages; sentence splitting happens at ingestion.
    pub pool: Vec<RawExcerpt>,
    /// Planted subcategories per full-sentence excerpt id (trigger-free
    /// annotated negatives map to all-false).
    pub truth: BTreeMap<String, [bool; NUM_SUBCATEGORIES]>,
}

const INTROS: &[&str] = &[
    "", "In a randomized trial, ", "At baseline, ", "Overall, ", "In this cohort, ", "During the audit, ",
    "In the pilot study, ", "According to the registry, ", "On review, ", "In practice, ",
];

const SUBJECTS: &[&str] = &[
    "the treatment protocol", "the care team", "serum sodium", "the biopsy result", "renal clearance",
    "the infusion schedule", "early mobilization", "the screening program", "hepatic function", "the imaging study",
    "oral anticoagulation", "the discharge checklist", "weekly counseling", "the medication review",
    "low dose aspirin", "the lipid panel", "supervised exercise", "the vaccination campaign", "the sleep study",
    "intravenous iron", "the pharmacist consult", "the triage score", "bedside ultrasound", "the fluid regimen",
    "the nutrition plan",
];

const VERBS: &[&str] = &[
    "reduced", "improved", "was associated with", "did not alter", "increased", "predicted", "preceded",
    "stabilized", "modestly lowered", "was linked to", "shortened", "delayed",
];

const OBJECTS: &[&str] = &[
    "blood pressure", "hepatic enzyme levels", "hospital readmission rates", "the risk of infection",
    "glycemic control", "length of stay", "bone mineral density", "platelet counts", "urinary output",
    "wound healing", "pain scores", "thyroid hormone levels", "oxygen saturation", "adverse drug events",
    "lung function", "heart rate variability", "serum potassium", "appointment adherence", "fall rates",
    "cortisol levels", "liver stiffness", "hemoglobin concentration", "antibody titers", "sleep quality",
    "kidney function",
];

const QUALIFIERS: &[&str] = &[
    "over twelve weeks", "within the first month", "after adjustment for dose", "in the outpatient setting",
    "during follow up", "compared with placebo", "at the second visit", "across all sites",
    "in the intensive care unit", "after discharge", "by the end of the study", "in most cases",
    "at six months", "despite rescue therapy", "in the rural clinics", "before surgery", "after the first dose",
    "in the emergency department", "within two days", "on repeat testing",
];

/// IUL trigger clauses per subcategory.
const TRIGGERS: [&[&str]; NUM_SUBCATEGORIES] = [
    &[
        "especially in women with polycystic ovary syndrome",
        "as seen in pregnant women",
        "among men with prostate enlargement",
        "particularly in women of reproductive age",
        "in women who menstruate regularly",
    ],
    &[
        "when a female presents with rash",
        "after the male presents with chest pain",
        "as the female reports fatigue",
        "once a female complains of dizziness",
        "when the male describes palpitations",
    ],
    &[
        "particularly among the elderly",
        "especially in older adults",
        "even in young people",
        "notably in the elderly",
        "mostly in older adults living alone",
    ],
    &[
        "in both males and females",
        "for men and women alike",
        "whether a woman or man chooses",
        "so he or she can decide",
        "in both sexes equally",
    ],
    &[
        "among diabetics on insulin",
        "in alcoholics admitted overnight",
        "for epileptics on therapy",
        "among asthmatics using inhalers",
        "in schizophrenics on depot injections",
    ],
    &[
        "with mental retardation",
        "in mentally retarded individuals",
        "in the fat and fertile group",
        "described as mongolism",
        "in handicapped individuals",
    ],
];

/// Appropriate uses of identifier terms in annotated text, per dimension.
const DISTRACTORS: [&[&str]; NUM_SUBCATEGORIES] = [
    &[
        "such as a mother going back to work",
        "although he has no testicular mass",
        "after her family history was reviewed",
        "while the father provided consent",
        "since his symptoms began abruptly",
    ],
    &[
        "as observed in female mice",
        "in male rats given the compound",
        "as males age beyond midlife",
        "in female cell lines",
        "using male donor tissue",
    ],
    &[
        "from childhood onward",
        "for a 65 year old with anemia",
        "in infants born preterm",
        "in adolescents with asthma",
        "as children reach school age",
    ],
    &[
        "differing between males and females in cell culture",
        "with his or her consent documented",
        "as men and women were sampled separately",
        "while males and females were housed apart",
        "counting both sexes in the tally",
    ],
    &[
        "in alcoholic hepatitis",
        "in diabetic retinopathy",
        "for patients on dialysis",
        "as diabetic ketoacidosis resolved",
        "for patients awaiting transplant",
    ],
    &[
        "with psychomotor retardation",
        "with fat malabsorption",
        "as senile plaques accumulate",
        "during the fertile window",
        "despite fat necrosis",
    ],
];

/// Identifier contexts found only in the unannotated pool.
const POOL_DISTRACTORS: [&[&str]; NUM_SUBCATEGORIES] = [
    &[
        "while his hemoglobin recovered",
        "and she denied recent travel",
        "although her thyroid panel was normal",
        "with maternal antibodies present",
        "given a paternal history of gout",
    ],
    &[
        "after assigned female sex at birth",
        "in the female urogenital sinus",
        "with male pattern baldness",
        "given female pelvic anatomy",
        "with a male karyotype",
    ],
    &[
        "in children and adults",
        "in infants with jaundice",
        "for a 72-year-old with syncope",
        "in adolescents after vaccination",
        "from childhood asthma",
    ],
    &[
        "as males and females differ in pelvic anatomy",
        "naming his or her guardian",
        "sampling men and women by age band",
        "as he or she signs the form",
        "in both sexes of the mouse strain",
    ],
    &[
        "in cancer patients",
        "with alcoholic liver cirrhosis",
        "in diabetic foot ulcers",
        "for patients with epilepsy",
        "among patients on warfarin",
    ],
    &[
        "despite intrauterine growth retardation",
        "given fat soluble vitamins",
        "with senile purpura",
        "in fertile soil samples",
        "as fat stores decline",
    ],
];

const SI_DIMENSIONS: [&str; NUM_SUBCATEGORIES] = ["gender", "sex", "age", "gender", "disability", "disability"];

fn neutral_sentence(rng: &mut ChaCha8Rng) -> String {
    let intro = *INTROS.choose(rng).expect("non-empty");
    let subject = *SUBJECTS.choose(rng).expect("non-empty");
    format!(
        "{intro}{subject} {} {} {}",
        VERBS.choose(rng).expect("non-empty"),
        OBJECTS.choose(rng).expect("non-empty"),
        QUALIFIERS.choose(rng).expect("non-empty"),
    )
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn sentence_with_clauses(base: &str, clauses: &[&str]) -> String {
    let mut s = capitalize(base);
    for clause in clauses {
        s.push_str(", ");
        s.push_str(clause);
    }
    s.push('.');
    s
}

struct Planned {
    text: String,
    planted: [bool; NUM_SUBCATEGORIES],
    /// Trigger clause per planted subcategory.
    triggers: Vec<(Subcategory, String)>,
    distractor: Option<(usize, String)>,
}

fn excerpt(id: String, doc: &str, page: u32, text: String, annotator: &str, codes: BTreeSet<String>) -> RawExcerpt {
    RawExcerpt {
        excerpt_id: id,
        document_id: doc.to_string(),
        page,
        text,
        annotator_id: annotator.to_string(),
        codes,
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::new();
    let mut planned = Vec::with_capacity(cfg.sentences);
    while planned.len() < cfg.sentences {
        let base = neutral_sentence(&mut rng);
        let mut planted = [false; NUM_SUBCATEGORIES];
        let mut triggers = Vec::new();
        for c in Subcategory::ALL {
            if rng.random_bool(cfg.positive_rate) {
                planted[c.index()] = true;
                let t = *TRIGGERS[c.index()].choose(&mut rng).expect("non-empty");
                triggers.push((c, t.to_string()));
            }
        }
        let positive = !triggers.is_empty();
        let distractor = if (positive && rng.random_bool(cfg.positive_distractor_rate))
            || (!positive && rng.random_bool(cfg.annotated_negative_rate))
        {
            let dim = rng.random_range(0..NUM_SUBCATEGORIES);
            Some((dim, DISTRACTORS[dim].choose(&mut rng).expect("non-empty").to_string()))
        } else {
            None
        };
        let mut clauses: Vec<&str> = triggers.iter().map(|(_, t)| t.as_str()).collect();
        if let Some((_, d)) = &distractor {
            clauses.push(d);
        }
        let text = sentence_with_clauses(&base, &clauses);
        if seen.insert(normalize_for_match(&text)) {
            planned.push(Planned { text, planted, triggers, distractor });
        }
    }

    let mut annotated = Vec::new();
    let mut truth = BTreeMap::new();
    let per_doc = cfg.sentences.div_ceil(cfg.documents.max(1));
    for (d, chunk) in planned.chunks(per_doc.max(1)).enumerate() {
        let doc = format!("doc{d:03}");
        let doc_texts: Vec<String> = chunk.iter().map(|p| normalize_for_match(&p.text)).collect();
        for (i, p) in chunk.iter().enumerate() {
            let page = (i / 10 + 1) as u32;
            let id = format!("{doc}-q{i:03}");
            let positive = !p.triggers.is_empty();
            if !positive && p.distractor.is_none() {
                continue;
            }
            truth.insert(id.clone(), p.planted);

            let mut full_codes = BTreeSet::new();
            let mut fragment_codes: Vec<(String, BTreeSet<String>)> = Vec::new();
            if positive {
                full_codes.insert("IUL".to_string());
                // The whole-sentence annotator codes the first trigger; fragment
                // annotators code each remaining one on its own clause.
                let (first, rest) = p.triggers.split_first().expect("positive");
                full_codes.insert(first.0.code().to_string());
                full_codes.insert(format!("SI:{}", SI_DIMENSIONS[first.0.index()]));
                for (c, clause) in rest {
                    let codes = BTreeSet::from(["IUL".to_string(), c.code().to_string()]);
                    fragment_codes.push((clause.clone(), codes));
                }
                if rest.is_empty() && rng.random_bool(0.5) {
                    fragment_codes.push((first.1.clone(), BTreeSet::from(["IUL".to_string()])));
                }
            }
            if let Some((dim, _)) = &p.distractor {
                full_codes.insert(format!("SI:{}", SI_DIMENSIONS[*dim]));
                if !positive {
                    full_codes.insert(format!("Bias:{}", SI_DIMENSIONS[*dim]));
                }
            }
            let mut fragments = Vec::new();
            for (clause, codes) in fragment_codes {
                let key = normalize_for_match(clause.as_str());
                // A fragment shared with another sentence in the document
                // would wrongly link the two; such codes go on the sentence.
                let holders = doc_texts.iter().filter(|t| t.contains(key.as_str())).count();
                if holders == 1 {
                    fragments.push((clause, codes));
                } else {
                    full_codes.extend(codes);
                }
            }
            annotated.push(excerpt(id.clone(), &doc, page, p.text.clone(), "ann1", full_codes));
            for (k, (clause, codes)) in fragments.into_iter().enumerate() {
                let annotator = format!("ann{}", k + 2);
                annotated.push(excerpt(format!("{id}-f{k}"), &doc, page, clause, &annotator, codes));
            }
        }
    }

    let mut pool = Vec::with_capacity(cfg.pool_pages);
    for page in 0..cfg.pool_pages {
        let mut sentences = Vec::with_capacity(cfg.pool_sentences_per_page);
        for _ in 0..cfg.pool_sentences_per_page {
            let base = neutral_sentence(&mut rng);
            let s = if rng.random_bool(cfg.pool_identifier_rate) {
                let dim = rng.random_range(0..NUM_SUBCATEGORIES);
                let clause = *POOL_DISTRACTORS[dim].choose(&mut rng).expect("non-empty");
                sentence_with_clauses(&base, &[clause])
            } else {
                sentence_with_clauses(&base, &[])
            };
            sentences.push(s);
        }
        let doc = format!("pool{:03}", page / 10);
        pool.push(excerpt(
            format!("{doc}-p{page:04}"),
            &doc,
            (page % 10 + 1) as u32,
            sentences.join(" "),
            "",
            BTreeSet::new(),
        ));
    }

    SynthCorpus { annotated, pool, truth }
}
