use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ReprError;

/// Pre-trained word (and phrase) vectors. Keys are stored lowercased.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    vocab: BTreeMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Self {
        WordVectorTable { dim, vocab: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    /// Inserts a vector; an existing entry is replaced and returned.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<Option<Vec<f64>>, ReprError> {
        if vector.len() != self.dim {
            return Err(ReprError::VectorDimension { expected: self.dim, got: vector.len() });
        }
        Ok(self.vocab.insert(token.to_lowercase(), vector))
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        match self.vocab.get(token) {
            Some(v) => Some(v),
            None => self.vocab.get(&token.to_lowercase()).map(Vec::as_slice),
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.get(token).is_some()
    }

    /// Mean of every vector in the table.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for v in self.vocab.values() {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
        }
        let n = self.vocab.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vocab.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Which tokens contribute to a user's centroid, and how many were dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenResolution {
    /// Sorted tokens whose vectors enter the centroid.
    pub used: Vec<String>,
    /// Words and phrases with no vector and no covering phrase.
    pub oov: usize,
}

/// Phrase tokens (`a_b`) found in the table cover one occurrence of each of
/// their words; phrases missing from the table fall back to their words,
/// which [`crate::data::tokenize`] also emits. Order of `tokens` is irrelevant.
pub fn resolve_tokens(table: &WordVectorTable, tokens: &[String]) -> TokenResolution {
    let mut words: BTreeMap<&str, usize> = BTreeMap::new();
    let mut phrases: Vec<&str> = Vec::new();
    for t in tokens {
        if t.contains('_') {
            phrases.push(t);
        } else {
            *words.entry(t.as_str()).or_default() += 1;
        }
    }
    phrases.sort_unstable();
    let mut used = Vec::new();
    for p in phrases {
        if table.contains(p) {
            used.push(String::from(p));
            for w in p.split('_') {
                if let Some(c) = words.get_mut(w) {
                    *c = c.saturating_sub(1);
                }
            }
        }
    }
    let mut oov = 0;
    for (w, count) in words {
        if table.contains(w) {
            used.extend(core::iter::repeat_n(String::from(w), count));
        } else {
            oov += count;
        }
    }
    used.sort();
    TokenResolution { used, oov }
}

/// Centroid of the in-vocabulary token vectors of one user.
///
/// Summation runs over sorted tokens, so any permutation of `tokens` gives the
/// same bits.
pub fn user_text_vector(table: &WordVectorTable, tokens: &[String]) -> Result<Vec<f64>, ReprError> {
    let res = resolve_tokens(table, tokens);
    if res.used.is_empty() {
        return Err(ReprError::NoValidTokens);
    }
    let mut acc = vec![0.0; table.dim()];
    for t in &res.used {
        let v = table.get(t).expect("resolved tokens are in vocabulary");
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = res.used.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tokenize;

    fn table() -> WordVectorTable {
        let mut t = WordVectorTable::new(2);
        t.insert("politics", vec![1.0, 0.0]).unwrap();
        t.insert("history", vec![0.0, 1.0]).unwrap();
        t.insert("video_games", vec![4.0, 4.0]).unwrap();
        t.insert("video", vec![100.0, 0.0]).unwrap();
        t.insert("climate", vec![2.0, 2.0]).unwrap();
        t
    }

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| String::from(*s)).collect()
    }

    #[test]
    fn single_word_is_its_vector() {
        assert_eq!(user_text_vector(&table(), &toks(&["politics"])).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn two_words_average() {
        assert_eq!(user_text_vector(&table(), &toks(&["politics", "history"])).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn all_oov_is_an_error() {
        assert_eq!(user_text_vector(&table(), &toks(&["zzz"])), Err(ReprError::NoValidTokens));
        assert_eq!(user_text_vector(&table(), &[]), Err(ReprError::NoValidTokens));
    }

    #[test]
    fn phrase_hit_covers_its_words() {
        let t = table();
        let r = resolve_tokens(&t, &tokenize("video games, politics"));
        assert_eq!(r.used, toks(&["politics", "video_games"]));
        assert_eq!(r.oov, 0);
    }

    #[test]
    fn phrase_miss_falls_back_to_words() {
        let t = table();
        let r = resolve_tokens(&t, &tokenize("climate change"));
        assert_eq!(r.used, toks(&["climate"]));
        assert_eq!(r.oov, 1);
    }

    #[test]
    fn lookups_are_case_normalized() {
        let mut t = WordVectorTable::new(1);
        t.insert("Politics", vec![3.0]).unwrap();
        assert_eq!(t.get("politics"), Some(&[3.0][..]));
        assert!(t.insert("x", vec![1.0, 2.0]).is_err());
    }
}
