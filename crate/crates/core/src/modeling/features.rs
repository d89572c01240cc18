use serde::{Deserialize, Serialize};

use super::ModelError;

pub const DEFAULT_DIMENSION: u32 = 1 << 18;
pub const DEFAULT_HASH_SEED: u64 = 0x1f2e_3d4c_5b6a_7988;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Builds from unsorted pairs, summing duplicate indices.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut out = Self::default();
        for (i, v) in pairs {
            if out.indices.last() == Some(&i) {
                *out.values.last_mut().expect("paired with index") += v;
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }
}

/// Hashed bag of word 1..=`word_ngrams` grams and character
/// `char_min..=char_max` grams, TF-weighted and L2-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Featurizer {
    pub dimension: u32,
    pub hash_seed: u64,
    pub word_ngrams: usize,
    pub char_min: usize,
    pub char_max: usize,
}

impl Default for Featurizer {
    fn default() -> Self {
        Self { dimension: DEFAULT_DIMENSION, hash_seed: DEFAULT_HASH_SEED, word_ngrams: 2, char_min: 3, char_max: 5 }
    }
}

impl Featurizer {
    pub fn with_dimension(dimension: u32) -> Result<Self, ModelError> {
        let f = Self { dimension, ..Self::default() };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dimension < 2 || !self.dimension.is_power_of_two() {
            return Err(ModelError::Config(format!("feature dimension {} is not a power of two", self.dimension)));
        }
        if self.char_min == 0 || self.char_min > self.char_max {
            return Err(ModelError::Config(format!("bad char n-gram range {}..={}", self.char_min, self.char_max)));
        }
        Ok(())
    }

    fn bucket(&self, namespace: u8, gram: &str) -> u32 {
        let mut h = FNV_OFFSET ^ self.hash_seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in std::iter::once(namespace).chain(gram.bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
        ((h ^ (h >> 32)) as u32) & (self.dimension - 1)
    }

    pub fn featurize(&self, text: &str) -> FeatureVector {
        let lowered = text.to_lowercase();
        let tokens: Vec<&str> = lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).collect();
        if tokens.is_empty() {
            return FeatureVector::default();
        }
        let mut pairs = Vec::new();
        for n in 1..=self.word_ngrams {
            for window in tokens.windows(n) {
                pairs.push((self.bucket(b'w' + n as u8, &window.join(" ")), 1.0));
            }
        }
        let padded: Vec<char> = format!(" {} ", tokens.join(" ")).chars().collect();
        let mut gram = String::new();
        for n in self.char_min..=self.char_max {
            for window in padded.windows(n) {
                gram.clear();
                gram.extend(window);
                pairs.push((self.bucket(b'c', &gram), 1.0));
            }
        }
        let mut fv = FeatureVector::from_pairs(pairs);
        let norm = fv.norm();
        fv.values.iter_mut().for_each(|v| *v /= norm);
        fv
    }
}

/// Featurizes with the default featurizer.
pub fn featurize(text: &str) -> FeatureVector {
    Featurizer::default().featurize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_is_empty_vector() {
        assert!(featurize("").is_empty());
        assert!(featurize("  ... ").is_empty());
    }

    #[test]
    fn word_order_matters() {
        let f = Featurizer::default();
        let ab = f.featurize("a b");
        let ba = f.featurize("b a");
        assert_ne!(ab.indices, ba.indices);
        // Only the bigram distinguishes them at word level.
        assert!(ab.indices.contains(&f.bucket(b'w' + 2, "a b")));
        assert!(!ab.indices.contains(&f.bucket(b'w' + 2, "b a")));
    }

    #[test]
    fn case_is_folded() {
        assert_eq!(featurize("Female Patients"), featurize("female patients"));
    }

    #[test]
    fn seed_changes_buckets() {
        let a = Featurizer::default().featurize("older adults");
        let b = Featurizer { hash_seed: 7, ..Featurizer::default() }.featurize("older adults");
        assert_ne!(a.indices, b.indices);
    }

    #[test]
    fn gram_counts() {
        // "ab": words {ab}, no bigram; padded " ab " has 2 trigrams, 1 four-gram.
        let f = Featurizer::with_dimension(1 << 20).unwrap();
        let fv = f.featurize("ab");
        assert_eq!(fv.len(), 4);
    }

    #[test]
    fn dimension_must_be_power_of_two() {
        assert!(Featurizer::with_dimension(1000).is_err());
        assert!(Featurizer::with_dimension(1024).is_ok());
    }

    proptest! {
        #[test]
        fn normalized_sorted_and_bounded(text in "[a-zA-Z ,.]{0,80}", log_dim in 4u32..12) {
            let f = Featurizer::with_dimension(1 << log_dim).unwrap();
            let fv = f.featurize(&text);
            prop_assert!(fv.indices.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(fv.indices.iter().all(|&i| i < f.dimension));
            prop_assert!(fv.values.iter().all(|v| v.is_finite() && *v > 0.0));
            if !fv.is_empty() {
                prop_assert!((fv.norm() - 1.0).abs() < 1e-12);
            }
            prop_assert_eq!(fv, f.featurize(&text));
        }
    }
}
