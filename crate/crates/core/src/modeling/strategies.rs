use serde::{Deserialize, Serialize};

use super::model::{is_positive, ScoreVector, Scorer, GENERAL_HEAD, NON_IUL_HEAD};
use super::ModelError;
use crate::taxonomy::{Subcategory, NUM_SUBCATEGORIES};

/// How a seven-head multilabel output yields the general IUL decision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneralRule {
    /// Positive when the largest subcategory probability exceeds 0.5.
    #[default]
    MaxSubcategory,
    /// Positive when the non-IUL head is at most 0.5.
    NonIulHead,
}

pub fn derive_general_from_multilabel(scores: &ScoreVector, rule: GeneralRule) -> Result<bool, ModelError> {
    match rule {
        GeneralRule::MaxSubcategory => scores
            .max_subcategory()
            .map(is_positive)
            .ok_or_else(|| ModelError::Config("score vector has no subcategory heads".into())),
        GeneralRule::NonIulHead => scores
            .get(NON_IUL_HEAD)
            .map(|p| !is_positive(p))
            .ok_or_else(|| ModelError::Config(format!("score vector has no `{NON_IUL_HEAD}` head"))),
    }
}

/// Continuous score behind a general decision, for AUC.
pub fn general_score_from_multilabel(scores: &ScoreVector, rule: GeneralRule) -> Option<f64> {
    match rule {
        GeneralRule::MaxSubcategory => scores.max_subcategory(),
        GeneralRule::NonIulHead => scores.get(NON_IUL_HEAD).map(|p| 1.0 - p),
    }
}

fn single_head(scorer: &dyn Scorer, texts: &[&str]) -> Result<Vec<f64>, ModelError> {
    let heads = scorer.heads();
    if heads.len() != 1 {
        return Err(ModelError::Config(format!("expected a single-head scorer, got heads {heads:?}")));
    }
    Ok(scorer.score(texts)?.into_iter().map(|s| s.probs[0]).collect())
}

/// One binary detector per subcategory.
pub struct SpecificClassifiers<'a> {
    models: [Option<&'a dyn Scorer>; NUM_SUBCATEGORIES],
}

impl<'a> SpecificClassifiers<'a> {
    pub fn new(models: [Option<&'a dyn Scorer>; NUM_SUBCATEGORIES]) -> Self {
        Self { models }
    }

    /// Per-text probabilities, indexed by subcategory.
    pub fn scores(&self, texts: &[&str]) -> Result<Vec<[f64; NUM_SUBCATEGORIES]>, ModelError> {
        let mut out = vec![[0.0; NUM_SUBCATEGORIES]; texts.len()];
        for c in Subcategory::ALL {
            let model = self.models[c.index()]
                .ok_or_else(|| ModelError::Config(format!("no specific classifier for {}", c.slug())))?;
            for (row, p) in out.iter_mut().zip(single_head(model, texts)?) {
                row[c.index()] = p;
            }
        }
        Ok(out)
    }
}

/// `ẑ_c = [f_c(x) > 0.5]` for each subcategory independently.
pub fn run_specific(classifiers: &SpecificClassifiers, texts: &[&str]) -> Result<Vec<[bool; NUM_SUBCATEGORIES]>, ModelError> {
    Ok(classifiers.scores(texts)?.into_iter().map(|row| row.map(is_positive)).collect())
}

/// Output of the gated two-level pipeline for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPrediction {
    pub general: f64,
    pub y: bool,
    /// Level-2 probabilities; `None` when the gate was closed.
    pub sub: Option<[f64; NUM_SUBCATEGORIES]>,
    pub z: [bool; NUM_SUBCATEGORIES],
}

impl HierarchicalPrediction {
    /// `P(IUL) * P(c | IUL)` for gated texts, 0 otherwise.
    pub fn subcategory_score(&self, c: Subcategory) -> f64 {
        self.sub.map_or(0.0, |s| self.general * s[c.index()])
    }
}

/// Level 1 decides IUL; only texts it flags reach the six-head Level 2.
pub fn hierarchical_predict(
    general: &dyn Scorer,
    sub: &dyn Scorer,
    texts: &[&str],
) -> Result<Vec<HierarchicalPrediction>, ModelError> {
    let level1 = single_head(general, texts)?;
    let gated: Vec<usize> = (0..texts.len()).filter(|&i| is_positive(level1[i])).collect();
    let mut out: Vec<HierarchicalPrediction> = level1
        .iter()
        .map(|&p| HierarchicalPrediction { general: p, y: false, sub: None, z: [false; NUM_SUBCATEGORIES] })
        .collect();
    if gated.is_empty() {
        return Ok(out);
    }
    let gated_texts: Vec<&str> = gated.iter().map(|&i| texts[i]).collect();
    let level2 = sub.score(&gated_texts)?;
    if level2.len() != gated.len() {
        return Err(ModelError::Config(format!("level-2 scorer returned {} rows for {}", level2.len(), gated.len())));
    }
    for (&i, scores) in gated.iter().zip(level2) {
        let mut probs = [0.0; NUM_SUBCATEGORIES];
        for c in Subcategory::ALL {
            probs[c.index()] = scores
                .subcategory(c)
                .ok_or_else(|| ModelError::Config(format!("level-2 scorer lacks head {}", c.slug())))?;
        }
        out[i].y = true;
        out[i].z = probs.map(is_positive);
        out[i].sub = Some(probs);
    }
    Ok(out)
}

/// General probabilities from a single-head scorer named [`GENERAL_HEAD`] or
/// any other single head.
pub fn general_scores(scorer: &dyn Scorer, texts: &[&str]) -> Result<Vec<f64>, ModelError> {
    let heads = scorer.heads();
    if heads.len() == 1 {
        return single_head(scorer, texts);
    }
    let pos = heads
        .iter()
        .position(|h| h == GENERAL_HEAD)
        .ok_or_else(|| ModelError::Config(format!("no `{GENERAL_HEAD}` head among {heads:?}")))?;
    Ok(scorer.score(texts)?.into_iter().map(|s| s.probs[pos]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeling::model::{multilabel_heads, subcategory_heads, CountingScorer, ScoreError};

    /// Returns fixed probabilities regardless of input.
    struct Fixed {
        heads: Vec<String>,
        probs: Vec<f64>,
    }

    impl Scorer for Fixed {
        fn heads(&self) -> Vec<String> {
            self.heads.clone()
        }

        fn score(&self, texts: &[&str]) -> Result<Vec<ScoreVector>, ScoreError> {
            Ok(texts.iter().map(|_| ScoreVector::new(self.heads.clone(), self.probs.clone()).unwrap()).collect())
        }
    }

    fn fixed(head: &str, p: f64) -> Fixed {
        Fixed { heads: vec![head.into()], probs: vec![p] }
    }

    #[test]
    fn max_rule_and_z0_rule() {
        let low = ScoreVector::new(multilabel_heads(), vec![0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1]).unwrap();
        assert!(!derive_general_from_multilabel(&low, GeneralRule::MaxSubcategory).unwrap());
        let edge = ScoreVector::new(multilabel_heads(), vec![0.9, 0.1, 0.1, 0.51, 0.1, 0.1, 0.1]).unwrap();
        assert!(derive_general_from_multilabel(&edge, GeneralRule::MaxSubcategory).unwrap());
        let split = ScoreVector::new(multilabel_heads(), vec![0.4, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3]).unwrap();
        assert!(!derive_general_from_multilabel(&split, GeneralRule::MaxSubcategory).unwrap());
        assert!(derive_general_from_multilabel(&split, GeneralRule::NonIulHead).unwrap());
        let half = ScoreVector::new(multilabel_heads(), vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(!derive_general_from_multilabel(&half, GeneralRule::MaxSubcategory).unwrap());
        assert!(derive_general_from_multilabel(&half, GeneralRule::NonIulHead).unwrap());
    }

    #[test]
    fn specific_bits_are_independent() {
        let models: Vec<Fixed> =
            Subcategory::ALL.iter().map(|c| fixed(c.slug(), if c.index() % 2 == 0 { 0.7 } else { 0.5 })).collect();
        let set = SpecificClassifiers::new(std::array::from_fn(|i| Some(&models[i] as &dyn Scorer)));
        let bits = run_specific(&set, &["x", "y"]).unwrap();
        assert_eq!(bits[0], [true, false, true, false, true, false]);
        assert_eq!(bits.len(), 2);
    }

    #[test]
    fn missing_specific_model_is_config_error() {
        let m = fixed("gender_misuse", 0.2);
        let mut models: [Option<&dyn Scorer>; 6] = [None; 6];
        models[0] = Some(&m);
        let set = SpecificClassifiers::new(models);
        assert!(matches!(run_specific(&set, &["x"]), Err(ModelError::Config(_))));
    }

    #[test]
    fn closed_gate_skips_level_two() {
        let general = fixed(GENERAL_HEAD, 0.2);
        let sub = CountingScorer::new(Fixed { heads: subcategory_heads(), probs: vec![0.9; 6] });
        let out = hierarchical_predict(&general, &sub, &["a", "b"]).unwrap();
        assert!(out.iter().all(|p| !p.y && p.z == [false; 6] && p.sub.is_none()));
        assert_eq!(sub.calls(), 0);
    }

    #[test]
    fn open_gate_uses_level_two() {
        let general = fixed(GENERAL_HEAD, 0.9);
        let sub = CountingScorer::new(Fixed { heads: subcategory_heads(), probs: vec![0.1, 0.8, 0.2, 0.2, 0.2, 0.2] });
        let out = hierarchical_predict(&general, &sub, &["a"]).unwrap();
        assert!(out[0].y);
        assert_eq!(out[0].z, [false, true, false, false, false, false]);
        assert!((out[0].subcategory_score(Subcategory::SexMisuse) - 0.72).abs() < 1e-12);
        assert_eq!(sub.texts_scored(), 1);
    }

    #[test]
    fn gate_at_exactly_half_is_closed() {
        let general = fixed(GENERAL_HEAD, 0.5);
        let sub = CountingScorer::new(Fixed { heads: subcategory_heads(), probs: vec![0.9; 6] });
        let out = hierarchical_predict(&general, &sub, &["a"]).unwrap();
        assert!(!out[0].y);
        assert_eq!(sub.texts_scored(), 0);
    }
}
